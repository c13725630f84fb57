"""Random forest: bootstrapped trees with per-node feature subsampling and
majority voting.

Each tree owns a generator seeded by splitmix64(master seed, tree index)
(see seeding module), which makes training deterministic under any thread
count: the bootstrap draw happens first, then one candidate-feature draw
per node in preorder.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InvariantError, SchemaError
from ..seeding import derive_seed
from .trees import grow_tree, tree_from_records, tree_to_records

CRITERIA = ("gini", "entropy")


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    criterion: str = "gini"
    max_depth: int = 15
    max_samples: float = 1.0
    max_features: int = None  # None -> floor(sqrt(D))
    bootstrap: bool = True

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ConfigError(f"criterion must be one of {CRITERIA}")
        if not 0 < self.max_samples <= 1:
            raise ConfigError("max_samples must lie in (0, 1]")
        if self.n_estimators < 1:
            raise ConfigError("need at least one tree")

    def to_dict(self):
        return {"n_estimators": self.n_estimators, "criterion": self.criterion,
                "max_depth": self.max_depth, "max_samples": self.max_samples,
                "max_features": self.max_features, "bootstrap": self.bootstrap}


@dataclass
class ForestModel:
    trees: list
    params: ForestParams
    seed: int
    feature_names: list
    degenerate: bool = False          # trained on a single class
    scaling: dict = None              # optional per-column normalization

    @property
    def n_features(self):
        return len(self.feature_names)


def _train_one(X, y, params, master_seed, tree_index, max_features):
    rng = np.random.default_rng(derive_seed(master_seed, tree_index))
    n = len(y)
    m = math.ceil(params.max_samples * n)
    if params.bootstrap:
        idx = rng.integers(0, n, size=m)
    else:
        idx = np.arange(n)
    return grow_tree(X[idx], y[idx], criterion=params.criterion,
                     max_depth=params.max_depth, max_features=max_features,
                     rng=rng)


def train_forest(X, y, params, seed, feature_names=None, n_threads=1):
    """Fit a forest; deterministic for fixed inputs and seed regardless of
    ``n_threads``. A single-class y yields a degenerate always-that-class
    model, flagged on the result."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise InvariantError("X must be (N, D) with matching labels")
    if len(y) < 2:
        raise InvariantError("need at least 2 training rows")
    if not np.isin(y, (0, 1)).all():
        raise InvariantError("labels must be binary 0/1")
    y = y.astype(np.int64)
    d = X.shape[1]
    mf = params.max_features if params.max_features is not None else max(
        1, math.floor(math.sqrt(d)))
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(d)]
    if len(feature_names) != d:
        raise SchemaError("feature names do not match matrix width")

    def job(i):
        return _train_one(X, y, params, seed, i, mf)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees = list(pool.map(job, range(params.n_estimators)))
    else:
        trees = [job(i) for i in range(params.n_estimators)]
    degenerate = bool(y.min() == y.max())
    return ForestModel(trees, params, int(seed), list(feature_names), degenerate)


def predict_forest(model, X, n_threads=1):
    """Majority-vote labels and the cropland vote fraction per row.

    An exact tie votes class 0.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise SchemaError(
            f"matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model expects {model.n_features}")

    def votes_of(tree):
        return tree.apply(X).astype(np.int64)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            votes = sum(pool.map(votes_of, model.trees))
    else:
        votes = sum(votes_of(t) for t in model.trees)
    n_trees = len(model.trees)
    labels = (2 * votes > n_trees).astype(np.uint8)
    return labels, votes / n_trees


def forest_to_dict(model):
    return {
        "kind": "rf",
        "params": model.params.to_dict(),
        "seed": model.seed,
        "feature_names": list(model.feature_names),
        "degenerate": model.degenerate,
        "scaling": model.scaling,
        "trees": [tree_to_records(t) for t in model.trees],
    }


def forest_from_dict(doc):
    params = ForestParams(**doc["params"])
    model = ForestModel([tree_from_records(r) for r in doc["trees"]], params,
                        doc["seed"], list(doc["feature_names"]),
                        doc.get("degenerate", False), doc.get("scaling"))
    for tree in model.trees:
        if tree.feature.max(initial=-1) >= len(model.feature_names):
            raise SchemaError("tree references a feature outside the model")
    return model

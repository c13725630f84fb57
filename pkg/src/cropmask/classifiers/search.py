"""Hyper-parameter grid search driven by spatial CV splits.

Combinations enumerate lexicographically (parameter names sorted, candidate
values in listed order); the winner has the best mean validation accuracy
across folds, first-enumerated on ties. Cells that fail to train are
recorded and disqualified.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import ConfigError, CropmaskError
from ..evaluation import ConfusionCounts, metrics
from ..seeding import derive_seed
from .forest import ForestParams, predict_forest, train_forest
from .svm import SvmParams, predict_svm, train_svm

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")

# search spaces used for model selection
DEFAULT_RF_GRID = {
    "n_estimators": [100, 300, 500],
    "criterion": ["gini", "entropy"],
    "max_depth": [5, 10, 15],
    "max_samples": [0.5, 0.8, 1.0],
}
DEFAULT_SVM_GRID = {
    "C": [0.5, 1.0, 10.0, 100.0],
    "kernel": ["poly", "rbf"],
}


def enumerate_grid(grid):
    """Lexicographic combination order over alphabetically sorted keys."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("grid must offer at least one value per parameter")
    keys = sorted(grid)
    return [dict(zip(keys, combo))
            for combo in itertools.product(*(grid[k] for k in keys))]


def _fit_predict(kind, combo, X_train, y_train, X_val, seed):
    if kind == "rf":
        model = train_forest(X_train, y_train, ForestParams(**combo), seed)
        return predict_forest(model, X_val)[0]
    if kind == "svm":
        model = train_svm(X_train, y_train, SvmParams(**combo))
        return predict_svm(model, X_val)
    raise ConfigError(f"unknown model kind {kind!r}")


def grid_search(X, y, splits, grid, kind="rf", metric="accuracy", seed=0,
                n_threads=1):
    """Evaluate every combination on every split; returns (best, table).

    ``best`` is the winning parameter dict; the table holds one row per
    combination with per-fold and mean metrics (see write_grid_csv).
    """
    if metric not in METRIC_NAMES:
        raise ConfigError(f"metric must be one of {METRIC_NAMES}")
    combos = enumerate_grid(grid)
    y = np.asarray(y)
    cells = [(ci, si) for ci in range(len(combos)) for si in range(len(splits))]

    def run_cell(cell):
        ci, si = cell
        train_rows, val_rows = splits[si]
        try:
            pred = _fit_predict(kind, combos[ci], X[train_rows], y[train_rows],
                                X[val_rows], derive_seed(seed, ci, si))
            return metrics(ConfusionCounts.from_predictions(y[val_rows], pred)), None
        except CropmaskError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(c) for c in cells]

    table = []
    best = None
    for ci, combo in enumerate(combos):
        fold_metrics = []
        errors = []
        for si in range(len(splits)):
            m, err = results[ci * len(splits) + si]
            fold_metrics.append(m)
            if err:
                errors.append(f"fold {si}: {err}")
        row = {"params": combo, "folds": fold_metrics, "error": "; ".join(errors)}
        if not errors:
            row["mean"] = {name: float(np.mean([fm[name] for fm in fold_metrics]))
                           for name in METRIC_NAMES}
            if best is None or row["mean"][metric] > table[best]["mean"][metric]:
                best = len(table)
        else:
            row["mean"] = None
        table.append(row)
    if best is None:
        raise ConfigError("every grid combination failed to train")
    return dict(table[best]["params"]), table


def format_params(params):
    """One-line echo of a parameter dict, keys sorted."""
    return ", ".join(f"{k}={params[k]}" for k in sorted(params))


def write_grid_csv(table, path):
    import csv

    param_keys = sorted(table[0]["params"])
    n_folds = len(table[0]["folds"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(param_keys)
        header += [f"mean_{m}" for m in METRIC_NAMES]
        for si in range(n_folds):
            header += [f"fold{si}_{m}" for m in METRIC_NAMES]
        header.append("error")
        writer.writerow(header)
        for row in table:
            rec = [row["params"][k] for k in param_keys]
            mean = row["mean"]
            rec += [repr(mean[m]) if mean else "" for m in METRIC_NAMES]
            for fm in row["folds"]:
                rec += [repr(fm[m]) if fm else "" for m in METRIC_NAMES]
            rec.append(row["error"])
            writer.writerow(rec)

"""Confusion-matrix metrics, pixel-count-weighted aggregation across test
regions, and permutation feature importance."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .seeding import rng_for

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts with cropland (1) as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise DomainError("confusion counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_predictions(cls, y_true, y_pred):
        y_true = np.asarray(y_true).astype(bool)
        y_pred = np.asarray(y_pred).astype(bool)
        return cls(tp=int((y_true & y_pred).sum()),
                   fp=int((~y_true & y_pred).sum()),
                   fn=int((y_true & ~y_pred).sum()),
                   tn=int((~y_true & ~y_pred).sum()))


def _ratio(num, den):
    return num / den if den > 0 else 0.0


def metrics(c):
    """accuracy, precision, recall, f1 with the 0/0 -> 0 convention."""
    if c.total == 0:
        raise DomainError("cannot score an empty confusion matrix")
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    return {
        "accuracy": (c.tp + c.tn) / c.total,
        "precision": precision,
        "recall": recall,
        "f1": _ratio(2 * precision * recall, precision + recall),
    }


def weighted_average(per_region):
    """Pixel-count-weighted mean of per-region metric dicts.

    ``per_region`` is a list of (metrics, pixel_count) pairs.
    """
    if not per_region:
        raise DomainError("nothing to average")
    weights = np.array([float(w) for _, w in per_region])
    if (weights <= 0).any():
        raise DomainError("pixel counts must be positive")
    out = {}
    for name in per_region[0][0]:
        vals = np.array([m[name] for m, _ in per_region])
        out[name] = float((weights * vals).sum() / weights.sum())
    return out


@dataclass
class EvaluationReport:
    regions: list           # {name, counts: ConfusionCounts, metrics, pixels}
    weighted: dict
    model_id: str = ""
    dataset_ids: list = field(default_factory=list)

    def to_json(self):
        doc = {
            "model_id": self.model_id,
            "dataset_ids": list(self.dataset_ids),
            "regions": [
                {"name": r["name"], "pixels": r["pixels"],
                 "counts": {"tp": r["counts"].tp, "fp": r["counts"].fp,
                            "fn": r["counts"].fn, "tn": r["counts"].tn},
                 "metrics": r["metrics"]}
                for r in self.regions
            ],
            "weighted": self.weighted,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def write_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["region", "pixels", "tp", "fp", "fn", "tn"]
                            + list(METRIC_NAMES))
            for r in self.regions:
                c = r["counts"]
                writer.writerow([r["name"], r["pixels"], c.tp, c.fp, c.fn, c.tn]
                                + [repr(r["metrics"][m]) for m in METRIC_NAMES])
            writer.writerow(["weighted", sum(r["pixels"] for r in self.regions),
                             "", "", "", ""]
                            + [repr(self.weighted[m]) for m in METRIC_NAMES])


def build_report(per_region, model_id="", dataset_ids=()):
    """Assemble an EvaluationReport from (name, y_true, y_pred) triples."""
    regions = []
    for name, y_true, y_pred in per_region:
        counts = ConfusionCounts.from_predictions(y_true, y_pred)
        regions.append({"name": name, "counts": counts,
                        "metrics": metrics(counts), "pixels": counts.total})
    weighted = weighted_average([(r["metrics"], r["pixels"]) for r in regions])
    return EvaluationReport(regions, weighted, model_id, list(dataset_ids))


@dataclass
class ImportanceTable:
    """Per-feature permutation importance, sorted by descending mean."""

    names: list
    mean: np.ndarray
    std: np.ndarray
    n_repeats: int

    def rank_of(self, name):
        return self.names.index(name)

    def above(self, threshold):
        keep = self.mean > threshold
        return [(n, float(m), float(s))
                for n, m, s, k in zip(self.names, self.mean, self.std, keep) if k]

    def write_csv(self, path, threshold=None):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feature_name", "mean", "std", "rank"])
            for rank, (name, m, s) in enumerate(zip(self.names, self.mean, self.std)):
                writer.writerow([name, repr(float(m)), repr(float(s)), rank])


def permutation_importance(predict_fn, X, y, feature_names=None, n_repeats=10,
                           seed=0):
    """Accuracy drop when one column is shuffled, averaged over repeats.

    Each (feature, repeat) pair shuffles with its own derived seed, so the
    result is independent of evaluation order. ``predict_fn`` maps a matrix
    to labels; X may be the concatenation of several test sets.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    n, d = X.shape
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(d)]
    baseline = float((predict_fn(X) == y).mean())
    mean = np.zeros(d)
    std = np.zeros(d)
    for j in range(d):
        drops = np.empty(n_repeats)
        col = X[:, j].copy()
        for r in range(n_repeats):
            perm = rng_for(seed, j, r).permutation(n)
            X[:, j] = col[perm]
            drops[r] = baseline - float((predict_fn(X) == y).mean())
        X[:, j] = col
        mean[j] = drops.mean()
        std[j] = drops.std()
    order = np.argsort(-mean, kind="stable")
    return ImportanceTable([feature_names[i] for i in order], mean[order],
                           std[order], n_repeats)

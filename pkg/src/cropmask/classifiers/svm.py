"""Soft-margin SVM solved by sequential minimal optimization (SMO).

The dual is maximized by deterministic Platt-style pairwise updates: the
outer loop alternates full sweeps with non-bound sweeps, the partner index
maximizes |E1 - E2| over non-bound points with fixed fallback ordering, so a
given (X, y, params) always produces the same model. Kernels: rbf
``exp(-g ||x - z||^2)`` and poly ``(g x.z + coef0)^degree`` with the
gamma-scale convention g = 1 / (D * var(X)).
"""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ConvergenceError, InvariantError, SchemaError

KERNELS = ("rbf", "poly")


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    kernel: str = "rbf"
    gamma: object = "scale"
    degree: int = 3
    coef0: float = 0.0
    tol: float = 1e-3
    max_passes: int = 20000

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ConfigError(f"kernel must be one of {KERNELS}")
        if self.C <= 0:
            raise ConfigError("C must be positive")

    def to_dict(self):
        return {"C": self.C, "kernel": self.kernel, "gamma": self.gamma,
                "degree": self.degree, "coef0": self.coef0, "tol": self.tol,
                "max_passes": self.max_passes}


def gamma_value(X, params):
    if params.gamma == "scale":
        var = float(np.asarray(X, dtype=np.float64).var())
        if var == 0.0:
            raise ConfigError("gamma='scale' undefined: input has zero variance")
        return 1.0 / (X.shape[1] * var)
    return float(params.gamma)


def kernel_matrix(A, B, kind, gamma, degree=3, coef0=0.0):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if kind == "poly":
        return (gamma * (A @ B.T) + coef0) ** degree
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


class _KernelCache:
    """Full Gram matrix when it fits, otherwise a FIFO row cache."""

    def __init__(self, X, kind, gamma, degree, coef0, full_limit=4096, cap=1024):
        self.X = X
        self.args = (kind, gamma, degree, coef0)
        n = X.shape[0]
        self.full = n <= full_limit
        if self.full:
            self.K = kernel_matrix(X, X, kind, gamma, degree, coef0)
            self.diag = np.ascontiguousarray(np.diagonal(self.K))
        else:
            self.K = OrderedDict()
            self.cap = cap
            if kind == "poly":
                self.diag = (gamma * (X * X).sum(axis=1) + coef0) ** degree
            else:
                self.diag = np.ones(n)

    def row(self, i):
        if self.full:
            return self.K[i]
        if i not in self.K:
            if len(self.K) >= self.cap:
                self.K.popitem(last=False)
            self.K[i] = kernel_matrix(self.X[i:i + 1], self.X, *self.args)[0]
        return self.K[i]


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    alpha_y: np.ndarray  # alpha_i * y_i for the support vectors
    b: float
    params: SvmParams
    gamma: float
    feature_names: list
    degenerate: bool = False
    scaling: dict = None

    @property
    def n_features(self):
        return len(self.feature_names)


def train_svm(X, y, params, feature_names=None, full_output=False):
    """Fit the soft-margin dual to KKT tolerance ``params.tol``.

    ``y`` holds classes 0/1 (mapped internally to -1/+1). Raises
    ConvergenceError if the pass budget runs out.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if not np.isin(y, (0, 1)).all():
        raise InvariantError("labels must be binary 0/1")
    if not np.isfinite(X).all():
        raise InvariantError("training rows must be finite")
    n, d = X.shape
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(d)]
    ypm = (2 * y.astype(np.float64) - 1.0)
    gamma = gamma_value(X, params)

    if y.min() == y.max():
        bias = 1.0 if y[0] == 1 else -1.0
        model = SvmModel(np.zeros((0, d)), np.zeros(0), bias, params, gamma,
                         list(feature_names), degenerate=True)
        return (model, {"alpha": np.zeros(n), "passes": 0}) if full_output else model

    alpha, b, info = _smo(X, ypm, params, gamma)
    sv = alpha > 1e-10
    model = SvmModel(X[sv].copy(), (alpha * ypm)[sv], float(b), params, gamma,
                     list(feature_names))
    if full_output:
        info["alpha"] = alpha
        return model, info
    return model


def _smo(X, y, params, gamma):
    n = X.shape[0]
    C = float(params.C)
    tol = float(params.tol)
    eps = 1e-10
    cache = _KernelCache(X, params.kernel, gamma, params.degree, params.coef0)
    diag = cache.diag
    alpha = np.zeros(n)
    state = {"b": 0.0}
    F = np.zeros(n)  # F_i = sum_j alpha_j y_j K_ij; E_i = F_i + b - y_i

    def take_step(i1, i2, e2):
        if i1 == i2:
            return False
        a1, a2 = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        e1 = F[i1] + state["b"] - y1
        s = y1 * y2
        if s > 0:
            lo, hi = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        else:
            lo, hi = max(0.0, a2 - a1), min(C, C + a2 - a1)
        if lo == hi:
            return False
        k11, k22 = diag[i1], diag[i2]
        row1 = cache.row(i1)
        k12 = row1[i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            new2 = a2 + y2 * (e1 - e2) / eta
            new2 = min(max(new2, lo), hi)
        else:
            # objective at both clip ends (Platt's low-eta case)
            f1 = y1 * F[i1] - a1 * k11 - s * a2 * k12
            f2 = y2 * F[i2] - s * a1 * k12 - a2 * k22
            l1 = a1 + s * (a2 - lo)
            h1 = a1 + s * (a2 - hi)
            obj_lo = (l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11
                      + 0.5 * lo * lo * k22 + s * lo * l1 * k12)
            obj_hi = (h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11
                      + 0.5 * hi * hi * k22 + s * hi * h1 * k12)
            if obj_lo < obj_hi - eps:
                new2 = lo
            elif obj_lo > obj_hi + eps:
                new2 = hi
            else:
                new2 = a2
        if abs(new2 - a2) < eps * (new2 + a2 + eps):
            return False
        new1 = a1 + s * (a2 - new2)
        new1 = min(max(new1, 0.0), C)
        # snap float dust onto the bounds so free/bound classification is exact
        snap = 1e-12 * C
        new1 = 0.0 if new1 < snap else (C if new1 > C - snap else new1)
        new2 = 0.0 if new2 < snap else (C if new2 > C - snap else new2)
        row2 = cache.row(i2)
        d1, d2 = new1 - a1, new2 - a2
        b1 = state["b"] - e1 - y1 * d1 * k11 - y2 * d2 * k12
        b2 = state["b"] - e2 - y1 * d1 * k12 - y2 * d2 * k22
        if 0.0 < new1 < C:
            state["b"] = b1
        elif 0.0 < new2 < C:
            state["b"] = b2
        else:
            state["b"] = 0.5 * (b1 + b2)
        np.add(F, y1 * d1 * row1 + y2 * d2 * row2, out=F)
        alpha[i1], alpha[i2] = new1, new2
        return True

    def examine(i2):
        y2, a2 = y[i2], alpha[i2]
        e2 = F[i2] + state["b"] - y2
        r2 = e2 * y2
        if not ((r2 < -tol and a2 < C) or (r2 > tol and a2 > 0)):
            return False
        nb = np.nonzero((alpha > 0) & (alpha < C))[0]
        if len(nb) > 1:
            e_nb = F[nb] + state["b"] - y[nb]
            i1 = int(nb[np.argmax(np.abs(e_nb - e2))])
            if take_step(i1, i2, e2):
                return True
        start = (i2 + 1) % n
        for i1 in np.roll(nb, -np.searchsorted(nb, start)):
            if take_step(int(i1), i2, e2):
                return True
        for off in range(n):
            if take_step((start + off) % n, i2, e2):
                return True
        return False

    examine_all = True
    changed = 0
    passes = 0
    while changed > 0 or examine_all:
        passes += 1
        if passes > params.max_passes:
            viol = _kkt_violation(alpha, y, F, state["b"], C, tol)
            raise ConvergenceError(
                f"SMO exhausted {params.max_passes} passes "
                f"(last pass changed {changed}, max KKT violation {viol:.3e})")
        changed = 0
        if examine_all:
            for i in range(n):
                changed += examine(i)
        else:
            for i in np.nonzero((alpha > 0) & (alpha < C))[0]:
                changed += examine(int(i))
        if examine_all:
            examine_all = False
        elif changed == 0:
            examine_all = True
    b = _final_bias(alpha, y, F, C, state["b"])
    viol = _kkt_violation(alpha, y, F, b, C, tol)
    return alpha, b, {"passes": passes, "kkt_violation": viol}


def _final_bias(alpha, y, F, C, fallback):
    """Canonical bias: mean over free vectors of y - F, else the midpoint of
    the feasible interval the bound vectors leave open."""
    u = y - F
    free = (alpha > 1e-10) & (alpha < C - 1e-10)
    if free.any():
        return float(u[free].mean())
    lower = ((alpha <= 1e-10) & (y > 0)) | ((alpha >= C - 1e-10) & (y < 0))
    upper = ((alpha <= 1e-10) & (y < 0)) | ((alpha >= C - 1e-10) & (y > 0))
    b_low = u[lower].max() if lower.any() else -np.inf
    b_high = u[upper].min() if upper.any() else np.inf
    if np.isfinite(b_low) and np.isfinite(b_high):
        return float(0.5 * (b_low + b_high))
    return float(fallback)


def _kkt_violation(alpha, y, F, b, C, tol):
    e = F + b - y
    r = e * y
    lower = np.where(alpha < C, np.maximum(0.0, -r - tol), 0.0)
    upper = np.where(alpha > 0, np.maximum(0.0, r - tol), 0.0)
    return float(np.maximum(lower, upper).max())


def dual_objective(alpha, y, K):
    """sum(alpha) - 1/2 (alpha*y)' K (alpha*y); the quantity SMO maximizes."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def decision_function(model, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[1] != model.n_features:
        raise SchemaError(f"matrix has {X.shape[1]} columns, model expects "
                          f"{model.n_features}")
    if len(model.alpha_y) == 0:
        return np.full(X.shape[0], model.b)
    k = kernel_matrix(model.support_vectors, X, model.params.kernel,
                      model.gamma, model.params.degree, model.params.coef0)
    return model.alpha_y @ k + model.b


def predict_svm(model, X):
    return (decision_function(model, X) > 0).astype(np.uint8)


def svm_to_dict(model):
    return {
        "kind": "svm",
        "params": model.params.to_dict(),
        "gamma_value": model.gamma,
        "sv": [list(map(float, row)) for row in model.support_vectors],
        "alpha_y": [float(v) for v in model.alpha_y],
        "b": model.b,
        "feature_names": list(model.feature_names),
        "degenerate": model.degenerate,
        "scaling": model.scaling,
    }


def svm_from_dict(doc):
    params = SvmParams(**doc["params"])
    sv = np.array(doc["sv"], dtype=np.float64).reshape(len(doc["sv"]),
                                                       len(doc["feature_names"]))
    return SvmModel(sv, np.array(doc["alpha_y"], dtype=np.float64), doc["b"],
                    params, doc["gamma_value"], list(doc["feature_names"]),
                    doc.get("degenerate", False), doc.get("scaling"))

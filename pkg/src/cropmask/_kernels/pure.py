"""NumPy fallback implementations of the hot kernels.

These are the reference semantics for ``_fast`` (the Cython twin). Both
backends accumulate in the same order and evaluate the same floating-point
expressions so that, gini impurity and routing being exact arithmetic, the
two produce identical outputs (entropy may differ by an ulp of log2).
"""

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1

GINI = 0
ENTROPY = 1


def neighbor_stats(plane):
    """Mean and population std of the 8-connected neighbors of every pixel.

    The center pixel is excluded; pixels on the raster edge use only the
    neighbors that exist. Returns ``(mean, std)`` arrays shaped like the input.
    """
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    acc = np.zeros((h, w))
    acc_sq = np.zeros((h, w))
    cnt = np.zeros((h, w))
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            tr0, tr1 = max(0, -dr), h - max(0, dr)
            tc0, tc1 = max(0, -dc), w - max(0, dc)
            sr0, sr1 = max(0, dr), h - max(0, -dr)
            sc0, sc1 = max(0, dc), w - max(0, -dc)
            src = plane[sr0:sr1, sc0:sc1]
            acc[tr0:tr1, tc0:tc1] += src
            acc_sq[tr0:tr1, tc0:tc1] += src * src
            cnt[tr0:tr1, tc0:tc1] += 1.0
    # a 1x1 raster has no neighbors; define its stats as 0
    np.maximum(cnt, 1.0, out=cnt)
    mean = acc / cnt
    var = acc_sq / cnt - mean * mean
    np.maximum(var, 0.0, out=var)
    return mean, np.sqrt(var)


def _impurity_pair(c0, c1, criterion):
    """Vectorized two-class impurity from integer count arrays."""
    n = c0 + c1
    p0 = c0 / n
    p1 = c1 / n
    if criterion == GINI:
        return 1.0 - p0 * p0 - p1 * p1
    out = np.zeros_like(p0)
    nz0 = c0 > 0
    nz1 = c1 > 0
    out[nz0] -= p0[nz0] * np.log2(p0[nz0])
    out[nz1] -= p1[nz1] * np.log2(p1[nz1])
    return out


def split_scan(values, labels, criterion):
    """Best threshold for one feature, given rows pre-sorted by value.

    ``values`` is ascending, ``labels`` holds the matching 0/1 classes.
    Candidate thresholds are midpoints between consecutive distinct values;
    the score is the size-weighted mean child impurity (lower is better),
    with the lowest qualifying threshold winning ties.

    Returns ``(found, score, threshold)``.
    """
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = values.shape[0]
    boundary = values[1:] > values[:-1]
    if not boundary.any():
        return False, 0.0, 0.0
    nl = np.arange(1, n, dtype=np.int64)
    c1l = np.cumsum(labels[:-1])
    c0l = nl - c1l
    nr = n - nl
    c1r = labels.sum() - c1l
    c0r = nr - c1r
    w = (nl * _impurity_pair(c0l, c1l, criterion)
         + nr * _impurity_pair(c0r, c1r, criterion)) / n
    w[~boundary] = np.inf
    i = int(np.argmin(w))
    return True, float(w[i]), 0.5 * (values[i] + values[i + 1])


def tree_apply(feature, threshold, left, right, klass, X):
    """Route every row of ``X`` through one tree; returns leaf classes."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.nonzero(feature[node] >= 0)[0]
    while rows.size:
        cur = node[rows]
        go_left = X[rows, feature[cur]] <= threshold[cur]
        node[rows] = np.where(go_left, left[cur], right[cur])
        rows = rows[feature[node[rows]] >= 0]
    return klass[node].astype(np.uint8)


def fnv1a64(data, h=FNV_OFFSET):
    """64-bit FNV-1a over a bytes-like object (slow pure-python loop).

    Pass the previous result as ``h`` to digest a stream chunk by chunk.
    """
    for b in bytes(data):
        h = ((h ^ b) * FNV_PRIME) & _U64
    return h

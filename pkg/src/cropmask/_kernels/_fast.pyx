# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; semantics mirror ``pure`` exactly (same accumulation
order, same expressions). Keep the two in sync."""

from libc.math cimport log2, sqrt

import numpy as np

cimport numpy as cnp

GINI = 0
ENTROPY = 1


def neighbor_stats(plane):
    cdef double[:, ::1] p = np.ascontiguousarray(plane, dtype=np.float64)
    cdef Py_ssize_t h = p.shape[0], w = p.shape[1]
    mean_arr = np.empty((h, w), dtype=np.float64)
    std_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] mean = mean_arr
    cdef double[:, ::1] std = std_arr
    cdef Py_ssize_t r, c, rr, cc
    cdef int dr, dc
    cdef double acc, acc_sq, cnt, v, m, var
    for r in range(h):
        for c in range(w):
            acc = 0.0
            acc_sq = 0.0
            cnt = 0.0
            for dr in range(-1, 2):
                for dc in range(-1, 2):
                    if dr == 0 and dc == 0:
                        continue
                    rr = r + dr
                    cc = c + dc
                    if rr < 0 or rr >= h or cc < 0 or cc >= w:
                        continue
                    v = p[rr, cc]
                    acc += v
                    acc_sq += v * v
                    cnt += 1.0
            if cnt == 0.0:
                cnt = 1.0  # no neighbors on a 1x1 raster
            m = acc / cnt
            var = acc_sq / cnt - m * m
            if var < 0.0:
                var = 0.0
            mean[r, c] = m
            std[r, c] = sqrt(var)
    return mean_arr, std_arr


cdef inline double _impurity(long long c0, long long c1, int criterion) noexcept:
    cdef double n = <double>(c0 + c1)
    cdef double p0 = <double>c0 / n
    cdef double p1 = <double>c1 / n
    cdef double out
    if criterion == 0:
        return 1.0 - p0 * p0 - p1 * p1
    out = 0.0
    if c0 > 0:
        out -= p0 * log2(p0)
    if c1 > 0:
        out -= p1 * log2(p1)
    return out


def split_scan(values, labels, int criterion):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef long long[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = v.shape[0], i
    cdef long long c1_total = 0, c1l = 0, nl, nr, c0l, c1r, c0r
    cdef double best = np.inf, w, thr = 0.0
    cdef bint found = False
    for i in range(n):
        c1_total += y[i]
    for i in range(n - 1):
        c1l += y[i]
        if v[i + 1] > v[i]:
            nl = i + 1
            nr = n - nl
            c0l = nl - c1l
            c1r = c1_total - c1l
            c0r = nr - c1r
            w = (<double>nl * _impurity(c0l, c1l, criterion)
                 + <double>nr * _impurity(c0r, c1r, criterion)) / <double>n
            if w < best:
                best = w
                thr = 0.5 * (v[i] + v[i + 1])
                found = True
    if not found:
        return False, 0.0, 0.0
    return True, best, thr


def tree_apply(feature, threshold, left, right, klass, X):
    cdef int[::1] feat = np.ascontiguousarray(feature, dtype=np.int32)
    cdef double[::1] thr = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef int[::1] lft = np.ascontiguousarray(left, dtype=np.int32)
    cdef int[::1] rgt = np.ascontiguousarray(right, dtype=np.int32)
    cdef unsigned char[::1] cls = np.ascontiguousarray(klass, dtype=np.uint8)
    cdef double[:, ::1] rows = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = rows.shape[0], i
    cdef int node
    out_arr = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if rows[i, feat[node]] <= thr[node]:
                node = lft[node]
            else:
                node = rgt[node]
        out[i] = cls[node]
    return out_arr

def fnv1a64(data, h=0xCBF29CE484222325):
    cdef const unsigned char[::1] buf = memoryview(bytes(data))
    cdef unsigned long long acc = <unsigned long long>h
    cdef unsigned long long prime = 0x100000001B3ULL
    cdef Py_ssize_t i
    for i in range(buf.shape[0]):
        acc = (acc ^ buf[i]) * prime
    return int(acc)

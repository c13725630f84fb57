"""Compiled and fallback kernels must agree: bitwise where the math is pure
arithmetic (gini, routing, neighbor sums), to an ulp where log2 is involved."""

import numpy as np
import pytest

from cropmask._kernels import BACKEND, pure

try:
    from cropmask._kernels import _fast
except ImportError:
    _fast = None

needs_fast = pytest.mark.skipif(_fast is None, reason="extension not built")


def test_backend_reported():
    assert BACKEND in ("compiled", "pure")


@needs_fast
def test_neighbor_stats_bitwise_equal():
    rng = np.random.default_rng(0)
    for shape in ((1, 1), (1, 7), (5, 1), (17, 23)):
        plane = rng.uniform(-10, 10, shape)
        pm, ps = pure.neighbor_stats(plane)
        fm, fs = _fast.neighbor_stats(plane)
        assert np.array_equal(pm, fm)
        assert np.array_equal(ps, fs)


@needs_fast
def test_split_scan_agreement():
    rng = np.random.default_rng(1)
    for trial in range(200):
        n = int(rng.integers(2, 60))
        values = np.sort(rng.choice(rng.uniform(0, 1, max(2, n // 2)), n))
        labels = rng.integers(0, 2, n)
        for crit in (pure.GINI, pure.ENTROPY):
            pf, pw, pt = pure.split_scan(values, labels, crit)
            ff, fw, ft = _fast.split_scan(values, labels, crit)
            assert pf == ff
            if pf:
                if crit == pure.GINI:
                    assert pw == fw and pt == ft
                else:
                    assert abs(pw - fw) < 1e-12
                    assert pt == ft


@needs_fast
def test_tree_apply_identical():
    rng = np.random.default_rng(2)
    feature = np.array([0, 1, -1, -1, -1], dtype=np.int32)
    threshold = np.array([0.5, 0.25, 0.0, 0.0, 0.0])
    left = np.array([1, 2, -1, -1, -1], dtype=np.int32)
    right = np.array([4, 3, -1, -1, -1], dtype=np.int32)
    klass = np.array([0, 0, 1, 0, 1], dtype=np.uint8)
    X = rng.uniform(0, 1, size=(500, 2))
    a = pure.tree_apply(feature, threshold, left, right, klass, X)
    b = _fast.tree_apply(feature, threshold, left, right, klass, X)
    assert np.array_equal(a, b)


@needs_fast
def test_fnv_agreement_and_chunking():
    rng = np.random.default_rng(3)
    data = bytes(rng.integers(0, 256, 4096, dtype=np.uint8))
    assert pure.fnv1a64(data) == _fast.fnv1a64(data)
    h = _fast.fnv1a64(data[:1000])
    assert _fast.fnv1a64(data[1000:], h) == _fast.fnv1a64(data)
    assert pure.fnv1a64(b"") == 0xCBF29CE484222325


def test_neighbor_stats_edge_counts():
    plane = np.arange(12, dtype=np.float64).reshape(3, 4)
    mean, std = pure.neighbor_stats(plane)
    # corner pixel (0, 0) has neighbors 1, 4, 5
    assert mean[0, 0] == pytest.approx((1 + 4 + 5) / 3)
    vals = np.array([1.0, 4.0, 5.0])
    assert std[0, 0] == pytest.approx(np.sqrt(((vals - vals.mean()) ** 2).mean()))

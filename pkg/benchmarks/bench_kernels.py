#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Usage:
    python benchmarks/bench_kernels.py [--quick]

Covers the four hot paths: 3x3 neighbor statistics (spatial features),
threshold scanning (tree training), tree routing (map inference), and FNV-1a
digests (artifact manifests). Also times one featurize + forest-train round
through the selected backend of the installed package.
"""

import argparse
import time

import numpy as np

from cropmask._kernels import pure

try:
    from cropmask._kernels import _fast
except ImportError:
    _fast = None


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_neighbor_stats(quick):
    side = 256 if quick else 1024
    plane = np.random.default_rng(0).uniform(0, 1, (side, side))
    return f"neighbor_stats {side}x{side}", (
        lambda impl: lambda: impl.neighbor_stats(plane))


def bench_split_scan(quick):
    n = 2000 if quick else 20000
    rng = np.random.default_rng(1)
    values = np.sort(rng.uniform(0, 1, n))
    labels = rng.integers(0, 2, n)

    def make(impl):
        def run():
            impl.split_scan(values, labels, 0)
            impl.split_scan(values, labels, 1)

        return run

    return f"split_scan n={n} (gini+entropy)", make


def bench_tree_apply(quick):
    rng = np.random.default_rng(2)
    depth = 12
    n_nodes = 2 ** (depth + 1) - 1
    feature = np.full(n_nodes, -1, dtype=np.int32)
    threshold = np.zeros(n_nodes)
    left = np.full(n_nodes, -1, dtype=np.int32)
    right = np.full(n_nodes, -1, dtype=np.int32)
    internal = np.arange(2 ** depth - 1)
    feature[internal] = rng.integers(0, 8, len(internal))
    threshold[internal] = rng.uniform(0, 1, len(internal))
    left[internal] = 2 * internal + 1
    right[internal] = 2 * internal + 2
    klass = rng.integers(0, 2, n_nodes).astype(np.uint8)
    rows = 20000 if quick else 200000
    X = rng.uniform(0, 1, (rows, 8))
    return f"tree_apply depth={depth} rows={rows}", (
        lambda impl: lambda: impl.tree_apply(feature, threshold, left, right,
                                             klass, X))


def bench_fnv(quick):
    data = bytes(np.random.default_rng(3).integers(
        0, 256, 1 << (18 if quick else 22), dtype=np.uint8))
    return f"fnv1a64 {len(data) >> 10} KiB", (
        lambda impl: lambda: impl.fnv1a64(data))


def bench_pipeline(quick):
    """One featurize + forest fit via whichever backend is active."""
    import os
    import sys
    import tempfile

    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
    from synthgen import make_scene

    from cropmask import _kernels
    from cropmask.classifiers import ForestParams, train_forest
    from cropmask.config import make_config
    from cropmask.features import FeatureSpec, attach_labels, featurize
    from cropmask.pipeline import (Artifacts, _load_composite,
                                   load_label_raster, stage_preprocess,
                                   stage_rasterize_labels)

    root = tempfile.mkdtemp()
    tile = os.path.join(root, "bench.bstk")
    labels = os.path.join(root, "labels.geojson")
    side = 64 if quick else 128
    make_scene(tile, labels, h=side, w=side, block_px=side // 4, margin_px=6,
               seed=1)
    cfg = make_config({"paths": {"tiles": [tile], "labels": labels,
                                 "out_dir": os.path.join(root, "out")}})
    stage_preprocess(cfg)
    stage_rasterize_labels(cfg)
    art = Artifacts(cfg.out_dir)
    stack = _load_composite(art, "bench")

    t0 = time.perf_counter()
    matrix = featurize(stack, FeatureSpec())
    t_feat = time.perf_counter() - t0
    labeled = attach_labels(matrix, load_label_raster(art, "bench"))
    t0 = time.perf_counter()
    train_forest(labeled.values, labeled.labels,
                 ForestParams(n_estimators=20, criterion="entropy",
                              max_depth=12, max_samples=0.5), seed=0)
    t_train = time.perf_counter() - t0
    print(f"  [{_kernels.BACKEND}] featurize {side}x{side}: {t_feat:.3f}s, "
          f"forest 20 trees on {labeled.values.shape}: {t_train:.3f}s")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller sizes")
    args = parser.parse_args()
    if _fast is None:
        print("compiled extension not built; run pip install -e . first")

    repeats = 3
    print(f"{'kernel':40s} {'pure':>10s} {'compiled':>10s} {'speedup':>8s}")
    for bench in (bench_neighbor_stats, bench_split_scan, bench_tree_apply,
                  bench_fnv):
        name, make = bench(args.quick)
        t_pure = timeit(make(pure), repeats)
        if _fast is not None:
            t_fast = timeit(make(_fast), repeats)
            print(f"{name:40s} {t_pure:9.4f}s {t_fast:9.4f}s "
                  f"{t_pure / t_fast:7.1f}x")
        else:
            print(f"{name:40s} {t_pure:9.4f}s {'-':>10s} {'-':>8s}")

    print("\npipeline spot-check (selected backend):")
    bench_pipeline(args.quick)


if __name__ == "__main__":
    main()

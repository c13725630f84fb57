"""Pipeline stages behind the CLI subcommands.

Each stage reads upstream artifacts from the output directory, verifies
their digests against the run manifest, writes its own artifacts, and
records them. Artifacts are flat files named ``<tile-stem>.<kind>.<ext>``
plus a handful of run-level files (folds, model, reports).
"""

import json
import os
import time
from pathlib import Path

import numpy as np

from . import diagnostics
from .classifiers import (ForestModel, ForestParams, SvmParams, load_model,
                          predict_any, save_model, train_forest, train_svm)
from .classifiers.search import (DEFAULT_RF_GRID, DEFAULT_SVM_GRID,
                                 format_params, grid_search, write_grid_csv)
from .errors import ConfigError, DomainError, SchemaError
from .features import (attach_labels, feature_names, featurize,
                       read_feature_bin, write_feature_bin)
from .manifest import RunManifest
from .preprocess import (STACK_NORMALIZATIONS, WEEKS, CloudMaskPolicy,
                         CompositeStack, apply_column_scaling,
                         column_scaling, composite_bandstack,
                         composite_from_bandstack, impute, normalize_stack)
from .raster import (MASK_NODATA, BandStack, BstkReader, LabelRaster,
                     parse_label_polygons, rasterize_labels, read_bandstack,
                     read_mask, write_bandstack, write_mask)
from .spatial_cv import (FoldAssignment, apply_dead_zone, assign_with_reseed,
                         cv_splits_multi, pixel_folds, polygons_extent)


def tile_stem(path):
    return Path(path).stem


class Artifacts:
    """Path layout of one run's output directory."""

    def __init__(self, out_dir):
        self.out_dir = str(out_dir)
        os.makedirs(self.out_dir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def composite(self, stem):
        return self.path(f"{stem}.composite.bstk")

    def validity(self, stem):
        return self.path(f"{stem}.validity.bstk")

    def removed(self, stem):
        return self.path(f"{stem}.removed.pgm")

    def labels_raster(self, stem):
        return self.path(f"{stem}.labels.pgm")

    def polyidx(self, stem):
        return self.path(f"{stem}.polyidx.bstk")

    def polymeta(self):
        return self.path("labels.polygons.json")

    def features_base(self, stem):
        return self.path(f"{stem}.features")

    def folds_raster(self, stem):
        return self.path(f"{stem}.folds.bstk")

    def mask(self, stem):
        return self.path(f"{stem}.mask.pgm")

    def votes(self, stem):
        return self.path(f"{stem}.votes.bstk")


def _open_manifest(cfg):
    return RunManifest.load_or_create(cfg.out_dir, cfg.hash())


def _read_removed(art, stem):
    mask, _ = read_mask(art.removed(stem))
    return mask == 1


def _load_composite(art, stem):
    stack = read_bandstack(art.composite(stem))
    return composite_from_bandstack(stack, removed=_read_removed(art, stem))


def load_label_raster(art, stem):
    values, georef = read_mask(art.labels_raster(stem))
    idx_stack = read_bandstack(art.polyidx(stem))
    polygon_idx = idx_stack.band("MASK")[0].astype(np.int32) - 1
    with open(art.polymeta(), encoding="utf-8") as fh:
        meta = json.load(fh)
    return LabelRaster(georef, values, polygon_idx, [p["id"] for p in meta])


# ---------------------------------------------------------------------------
# Stages


def stage_preprocess(cfg):
    art = Artifacts(cfg.out_dir)
    manifest = _open_manifest(cfg)
    pp = cfg.doc["preprocess"]
    policy = CloudMaskPolicy(frozenset(pp["scl_masked"]))
    t0 = time.monotonic()
    inputs = manifest.check_inputs(cfg.tiles)
    outputs = []
    summaries = []
    for tile in cfg.tiles:
        stem = tile_stem(tile)
        raw = read_bandstack(tile)
        comp = composite_bandstack(raw, policy, pp["year"])
        if comp.removed.all():
            raise DomainError(f"tile {tile}: zero usable observations anywhere")
        comp = impute(comp, pp["imputation"])
        write_bandstack(comp.to_bandstack(), art.composite(stem))
        write_mask(comp.removed.astype(np.uint8), comp.georef, art.removed(stem))
        validity_px = comp.validity.astype(np.uint16)[:, None, :, :]
        write_bandstack(BandStack(comp.georef, ["MASK"], list(range(WEEKS)),
                                  validity_px), art.validity(stem))
        outputs += [art.composite(stem), art.removed(stem), art.validity(stem)]
        # the removed mask has a georef sidecar too
        outputs.append(art.removed(stem).replace(".pgm", ".georef.json"))
        summaries.append({"tile": stem,
                          "removed_pixels": int(comp.removed.sum()),
                          "observed_weeks": int(comp.validity.any(axis=(1, 2)).sum())})
    manifest.record_stage("preprocess", inputs, outputs,
                          wall_s=time.monotonic() - t0)
    return summaries


def stage_rasterize_labels(cfg):
    art = Artifacts(cfg.out_dir)
    manifest = _open_manifest(cfg)
    t0 = time.monotonic()
    inputs = manifest.check_inputs([cfg.labels_path] + cfg.tiles)
    with open(cfg.labels_path, encoding="utf-8") as fh:
        polys = parse_label_polygons(fh.read())
    if len(polys) >= 65535:
        raise SchemaError("polygon index raster caps at 65534 polygons")
    outputs = [art.polymeta()]
    with open(art.polymeta(), "w", encoding="utf-8") as fh:
        json.dump([{"id": p.id, "class": p.cls} for p in polys], fh,
                  separators=(",", ":"))
    summaries = []
    for tile in cfg.tiles:
        stem = tile_stem(tile)
        reader = BstkReader(tile)
        shape = reader.shape[2:]
        raster = rasterize_labels(polys, reader.georef, shape)
        write_mask(raster.values, reader.georef, art.labels_raster(stem))
        idx = (raster.polygon_idx.astype(np.int64) + 1).astype(np.uint16)
        write_bandstack(BandStack(reader.georef, ["MASK"], [0],
                                  idx[None, None, :, :]), art.polyidx(stem))
        outputs += [art.labels_raster(stem),
                    art.labels_raster(stem).replace(".pgm", ".georef.json"),
                    art.polyidx(stem)]
        summaries.append({"tile": stem, "class_counts": raster.class_counts()})
    manifest.record_stage("rasterize-labels", inputs, outputs,
                          wall_s=time.monotonic() - t0)
    return summaries


def stage_featurize(cfg):
    art = Artifacts(cfg.out_dir)
    manifest = _open_manifest(cfg)
    spec = cfg.feature_spec()
    method = cfg.doc["preprocess"]["normalization"]
    t0 = time.monotonic()
    outputs = []
    summaries = []
    input_paths = []
    for tile in cfg.tiles:
        stem = tile_stem(tile)
        input_paths += [art.composite(stem), art.removed(stem)]
        if os.path.exists(art.labels_raster(stem)):
            input_paths += [art.labels_raster(stem), art.polyidx(stem)]
    inputs = manifest.check_inputs(input_paths)
    for tile in cfg.tiles:
        stem = tile_stem(tile)
        stack = _load_composite(art, stem)
        if method in STACK_NORMALIZATIONS:
            stack = normalize_stack(stack, method)
        matrix = featurize(stack, spec)
        if os.path.exists(art.labels_raster(stem)):
            matrix = attach_labels(matrix, load_label_raster(art, stem))
        write_feature_bin(matrix, art.features_base(stem))
        base = art.features_base(stem)
        outputs += [base + ".f64", base + ".idx", base + ".json"]
        if matrix.labels is not None:
            outputs.append(base + ".labels")
        summaries.append({"tile": stem, "rows": matrix.values.shape[0],
                          "columns": matrix.values.shape[1]})
    manifest.record_stage("featurize", inputs, outputs,
                          wall_s=time.monotonic() - t0)
    return summaries


def stage_folds(cfg):
    art = Artifacts(cfg.out_dir)
    manifest = _open_manifest(cfg)
    cv = cfg.doc["cv"]
    t0 = time.monotonic()
    inputs = manifest.check_inputs([cfg.labels_path])
    with open(cfg.labels_path, encoding="utf-8") as fh:
        polys = parse_label_polygons(fh.read())
    extent = polygons_extent(polys)
    grid, assign = assign_with_reseed(polys, extent, cv["block_size_m"],
                                      cv["k"], cv["seed"])
    assign = apply_dead_zone(assign, polys, cv["dead_zone_m"])
    outputs = [art.path("folds.csv"), art.path("folds.json")]
    import csv

    with open(art.path("folds.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["polygon_id", "fold"])
        for p in polys:
            writer.writerow([p.id, assign.polygon_fold[p.id]])
    with open(art.path("folds.json"), "w", encoding="utf-8") as fh:
        json.dump({
            "k": assign.k,
            "seed_used": grid.seed,
            "block_size_m": grid.block_size,
            "origin": list(grid.origin),
            "grid_rows": grid.rows,
            "grid_cols": grid.cols,
            "extent": [float(v) for v in extent],
            "dead_zone_m": assign.dead_zone_radius,
            "excluded": {str(f): sorted(s) for f, s in enumerate(assign.excluded)},
        }, fh, sort_keys=True, separators=(",", ":"))
    for tile in cfg.tiles:
        stem = tile_stem(tile)
        if not os.path.exists(art.labels_raster(stem)):
            continue
        raster = load_label_raster(art, stem)
        fold_grid = pixel_folds(raster, assign)
        px = (fold_grid.astype(np.int64) + 1).astype(np.uint16)
        write_bandstack(BandStack(raster.georef, ["MASK"], [0],
                                  px[None, None, :, :]), art.folds_raster(stem))
        outputs.append(art.folds_raster(stem))
    manifest.record_stage("folds", inputs, outputs, seeds={"cv": grid.seed},
                          wall_s=time.monotonic() - t0)
    return {"seed_used": grid.seed, "fold_sizes": assign.fold_sizes(),
            "excluded": [len(s) for s in assign.excluded]}


def load_fold_assignment(art):
    import csv

    with open(art.path("folds.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    mapping = {}
    with open(art.path("folds.csv"), newline="") as fh:
        for rec in csv.DictReader(fh):
            mapping[rec["polygon_id"]] = int(rec["fold"])
    excluded = [set(meta["excluded"].get(str(f), [])) for f in range(meta["k"])]
    return FoldAssignment(meta["k"], mapping, meta["dead_zone_m"], excluded)


def _labeled_tiles(cfg, art):
    stems = []
    for tile in cfg.tiles:
        stem = tile_stem(tile)
        if os.path.exists(art.features_base(stem) + ".labels"):
            stems.append(stem)
    if not stems:
        raise DomainError("no tile has labeled feature rows; run featurize "
                          "after rasterize-labels")
    return stems


def _model_grid(cfg):
    model = cfg.doc["model"]
    if model["grid"]:
        return model["grid"]
    if model["params"]:
        return {k: [v] for k, v in model["params"].items()}
    return DEFAULT_RF_GRID if model["kind"] == "rf" else DEFAULT_SVM_GRID


def stage_train(cfg, n_threads=1):
    art = Artifacts(cfg.out_dir)
    manifest = _open_manifest(cfg)
    t0 = time.monotonic()
    stems = _labeled_tiles(cfg, art)
    input_paths = [art.path("folds.csv"), art.path("folds.json")]
    for stem in stems:
        base = art.features_base(stem)
        input_paths += [base + ".f64", base + ".idx", base + ".json",
                        base + ".labels", art.labels_raster(stem),
                        art.polyidx(stem)]
    inputs = manifest.check_inputs(input_paths)
    matrices = [read_feature_bin(art.features_base(s)) for s in stems]
    names = matrices[0].names
    for m in matrices[1:]:
        if m.names != names:
            raise SchemaError("tiles carry different feature columns")
    X = np.vstack([m.values for m in matrices])
    y = np.concatenate([m.labels for m in matrices])
    assign = load_fold_assignment(art)
    pairs = [(load_label_raster(art, s), m) for s, m in zip(stems, matrices)]
    splits = cv_splits_multi(assign, pairs)

    method = cfg.doc["preprocess"]["normalization"]
    scaling = None
    if method not in STACK_NORMALIZATIONS:
        offset, scale = column_scaling(X, method)
        X = apply_column_scaling(X, offset, scale)
        scaling = {"method": method, "offset": [float(v) for v in offset],
                   "scale": [float(v) for v in scale]}

    kind = cfg.doc["model"]["kind"]
    seed = cfg.doc["cv"]["seed"]
    best, table = grid_search(X, y, splits, _model_grid(cfg), kind=kind,
                              seed=seed, n_threads=n_threads)
    write_grid_csv(table, art.path("gridsearch.csv"))
    if kind == "rf":
        model = train_forest(X, y, ForestParams(**best), seed,
                             feature_names=names, n_threads=n_threads)
    else:
        model = train_svm(X, y, SvmParams(**best), feature_names=names)
    model.scaling = scaling
    save_model(model, art.path("model.json"))
    manifest.record_stage("train", inputs,
                          [art.path("model.json"), art.path("gridsearch.csv")],
                          seeds={"train": seed}, wall_s=time.monotonic() - t0)
    best_row = next(r for r in table if r["params"] == best)
    return {"best_params": format_params(best), "cv_metrics": best_row["mean"],
            "training_rows": int(len(y))}


def _apply_model_scaling(model, values):
    if not model.scaling:
        return values
    return apply_column_scaling(values,
                                np.asarray(model.scaling["offset"]),
                                np.asarray(model.scaling["scale"]))


def _region_matrix(cfg, art, region):
    """Labeled feature rows and labels for one evaluation region."""
    spec = cfg.feature_spec()
    method = cfg.doc["preprocess"]["normalization"]
    with open(region["labels"], encoding="utf-8") as fh:
        polys = parse_label_polygons(fh.read())
    parts = []
    labels = []
    for tile in region["tiles"]:
        stem = tile_stem(tile)
        stack = _load_composite(art, stem)
        if method in STACK_NORMALIZATIONS:
            stack = normalize_stack(stack, method)
        raster = rasterize_labels(polys, stack.georef,
                                  stack.values.shape[2:])
        matrix = attach_labels(featurize(stack, spec), raster)
        if matrix.values.shape[0]:
            parts.append(matrix.values)
            labels.append(matrix.labels)
    if not parts:
        raise DomainError(f"region {region['name']}: no labeled pixels")
    return np.vstack(parts), np.concatenate(labels)


def stage_evaluate(cfg, n_threads=1):
    art = Artifacts(cfg.out_dir)
    manifest = _open_manifest(cfg)
    from .evaluation import build_report

    regions = cfg.doc["evaluation"]["regions"]
    if not regions:
        raise ConfigError("evaluation.regions is empty")
    t0 = time.monotonic()
    input_paths = [art.path("model.json")]
    for region in regions:
        input_paths.append(region["labels"])
        for tile in region["tiles"]:
            stem = tile_stem(tile)
            input_paths += [art.composite(stem), art.removed(stem)]
    inputs = manifest.check_inputs(input_paths)
    model = load_model(art.path("model.json"))
    per_region = []
    for region in regions:
        X, y = _region_matrix(cfg, art, region)
        pred = predict_any(model, _apply_model_scaling(model, X))[0]
        per_region.append((region["name"], y, pred))
    report = build_report(per_region, model_id=inputs["model.json"],
                          dataset_ids=[r["name"] for r in regions])
    with open(art.path("report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    report.write_csv(art.path("report.csv"))
    manifest.record_stage("evaluate", inputs,
                          [art.path("report.json"), art.path("report.csv")],
                          wall_s=time.monotonic() - t0)
    return {"weighted": report.weighted,
            "regions": {r["name"]: r["metrics"] for r in report.regions}}


def stage_importance(cfg, n_threads=1):
    art = Artifacts(cfg.out_dir)
    manifest = _open_manifest(cfg)
    from .evaluation import permutation_importance

    ev = cfg.doc["evaluation"]
    if not ev["regions"]:
        raise ConfigError("evaluation.regions is empty")
    t0 = time.monotonic()
    input_paths = [art.path("model.json")]
    for region in ev["regions"]:
        input_paths.append(region["labels"])
        for tile in region["tiles"]:
            input_paths.append(art.composite(tile_stem(tile)))
    inputs = manifest.check_inputs(input_paths)
    model = load_model(art.path("model.json"))
    blocks = [_region_matrix(cfg, art, region) for region in ev["regions"]]
    X = _apply_model_scaling(model, np.vstack([b[0] for b in blocks]))
    y = np.concatenate([b[1] for b in blocks])

    def predict_fn(m):
        return predict_any(model, m)[0]

    table = permutation_importance(predict_fn, X, y, model.feature_names,
                                   n_repeats=ev["n_repeats"],
                                   seed=cfg.doc["cv"]["seed"])
    table.write_csv(art.path("importance.csv"))
    top = table.above(ev["importance_threshold"])
    with open(art.path("importance_top.csv"), "w", newline="") as fh:
        import csv

        writer = csv.writer(fh)
        writer.writerow(["feature_name", "mean", "std", "rank"])
        for rank, (name, m, s) in enumerate(top):
            writer.writerow([name, repr(m), repr(s), rank])
    manifest.record_stage("importance", inputs,
                          [art.path("importance.csv"),
                           art.path("importance_top.csv")],
                          seeds={"importance": cfg.doc["cv"]["seed"]},
                          wall_s=time.monotonic() - t0)
    return {"top": top[:10], "n_above_threshold": len(top)}


def stage_predict(cfg, n_threads=1, strip_height=None):
    art = Artifacts(cfg.out_dir)
    manifest = _open_manifest(cfg)
    spec = cfg.feature_spec()
    method = cfg.doc["preprocess"]["normalization"]
    strip = int(strip_height or cfg.doc["predict"]["strip_height"])
    t0 = time.monotonic()
    input_paths = [art.path("model.json")]
    for tile in cfg.tiles:
        stem = tile_stem(tile)
        input_paths += [art.composite(stem), art.removed(stem)]
    inputs = manifest.check_inputs(input_paths)
    model = load_model(art.path("model.json"))
    expected = feature_names(spec)
    if model.feature_names != expected:
        raise SchemaError(
            "model feature contract does not match the configured feature "
            f"spec ({len(model.feature_names)} vs {len(expected)} columns)")
    outputs = []
    summaries = []
    for tile in cfg.tiles:
        stem = tile_stem(tile)
        reader = BstkReader(art.composite(stem))
        removed = _read_removed(art, stem)
        t, b, h, w = reader.shape
        mask = np.full((h, w), MASK_NODATA, dtype=np.uint8)
        votes = np.zeros((h, w), dtype=np.float64)
        predicted = np.zeros((h, w), dtype=bool)
        for r0 in range(0, h, strip):
            r1 = min(h, r0 + strip)
            s0, s1 = max(0, r0 - 1), min(h, r1 + 1)
            slab_px = reader.read_rows(s0, s1).astype(np.float64)
            slab_removed = removed[s0:s1]
            slab = CompositeStack(reader.georef, list(reader.band_names),
                                  slab_px,
                                  np.ones((t, s1 - s0, w), dtype=bool)
                                  & ~slab_removed[None, :, :],
                                  slab_removed)
            if method in STACK_NORMALIZATIONS:
                slab = normalize_stack(slab, method)
            matrix = featurize(slab, spec, row_range=(r0 - s0, r1 - s0))
            if matrix.values.shape[0] == 0:
                continue
            values = _apply_model_scaling(model, matrix.values)
            labels, frac = predict_any(model, values)
            rows = matrix.pixel_index[:, 0].astype(np.int64) + s0
            cols = matrix.pixel_index[:, 1].astype(np.int64)
            mask[rows, cols] = labels
            votes[rows, cols] = frac
            predicted[rows, cols] = True
        write_mask(mask, reader.georef, art.mask(stem))
        conf = np.zeros((h, w), dtype=np.uint16)
        if isinstance(model, ForestModel):
            conf[predicted] = np.rint(votes[predicted] * 10000).astype(np.uint16) + 1
        else:
            conf[predicted] = (mask[predicted] == 1).astype(np.uint16) + 1
        write_bandstack(BandStack(reader.georef, ["MASK"], [0],
                                  conf[None, None, :, :]), art.votes(stem))
        outputs += [art.mask(stem), art.mask(stem).replace(".pgm", ".georef.json"),
                    art.votes(stem)]
        summaries.append({"tile": stem,
                          "cropland_pixels": int((mask == 1).sum()),
                          "nodata_pixels": int((mask == MASK_NODATA).sum())})
    manifest.record_stage("predict", inputs, outputs,
                          wall_s=time.monotonic() - t0)
    return summaries


def stage_variogram(cfg):
    art = Artifacts(cfg.out_dir)
    manifest = _open_manifest(cfg)
    vg_cfg = cfg.doc["variogram"]
    t0 = time.monotonic()
    stems = [tile_stem(t) for t in cfg.tiles
             if os.path.exists(art.labels_raster(tile_stem(t)))]
    if not stems:
        raise DomainError("no label rasters found; run rasterize-labels first")
    input_paths = []
    for stem in stems:
        input_paths += [art.composite(stem), art.removed(stem),
                        art.labels_raster(stem)]
    inputs = manifest.check_inputs(input_paths)
    samples = []
    for stem in stems:
        stack = _load_composite(art, stem)
        raster = load_label_raster(art, stem)
        sel = raster.labeled_mask() & ~stack.removed
        rows, cols = np.nonzero(sel)
        x, y = stack.georef.pixel_center(rows, cols)
        from .features import ndvi

        value = ndvi(stack.band("B08"), stack.band("B04"))[:, sel].mean(axis=0)
        samples.append(np.column_stack([x, y, value]))
    samples = np.vstack(samples)
    samples = diagnostics.subsample(samples, stride=vg_cfg["stride"],
                                    random_n=vg_cfg["random_n"],
                                    seed=cfg.doc["cv"]["seed"])
    vg = diagnostics.empirical_semivariogram(samples, vg_cfg["bin_width_m"],
                                             vg_cfg["max_lag_m"])
    vg.fit = diagnostics.fit_spherical(vg)
    vg.write_csv(art.path("variogram.csv"))
    vg.write_fit_json(art.path("variogram.json"))
    manifest.record_stage("variogram", inputs,
                          [art.path("variogram.csv"), art.path("variogram.json")],
                          wall_s=time.monotonic() - t0)
    return {"samples": int(len(samples)), "fit": vg.fit}


def stage_profile(cfg):
    art = Artifacts(cfg.out_dir)
    manifest = _open_manifest(cfg)
    t0 = time.monotonic()
    stems = [tile_stem(t) for t in cfg.tiles
             if os.path.exists(art.labels_raster(tile_stem(t)))]
    if not stems:
        raise DomainError("no label rasters found; run rasterize-labels first")
    input_paths = []
    for stem in stems:
        input_paths += [art.composite(stem), art.removed(stem),
                        art.labels_raster(stem)]
    inputs = manifest.check_inputs(input_paths)
    merged = {0: [], 1: []}
    for stem in stems:
        stack = _load_composite(art, stem)
        raster = load_label_raster(art, stem)
        for cls, series in diagnostics.ndvi_series_by_class(stack, raster).items():
            merged[cls].append(series)
    series_by_class = {cls: np.concatenate(parts, axis=1)
                       for cls, parts in merged.items() if parts}
    profile = diagnostics.profile_from_series(series_by_class)
    profile.write_csv(art.path("profile.csv"))
    manifest.record_stage("profile", inputs, [art.path("profile.csv")],
                          wall_s=time.monotonic() - t0)
    return {cls: {"pixels": p["pixels"]} for cls, p in profile.classes.items()}

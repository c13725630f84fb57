"""Synthetic two-class scene generator for end-to-end tests.

Builds a 10 m GSD tile whose quadrants alternate between cropland and
non-cropland. Cropland pixels follow a seasonal NDVI curve (spring rise to a
~0.8 plateau, autumn drop); non-cropland sits near 0.45 with more noise.
Observations arrive every few days through 2020 with a random fraction
cloud-contaminated (bright DNs, SCL 9). Label polygons are inset rectangles
on a block lattice so spatial CV folds get both classes.
"""

import datetime
import json

import numpy as np

from cropmask.raster import BandStack, GeoRef, write_bandstack

GSD = 10.0
PLATEAU_NDVI = 0.8
NONCROP_NDVI = 0.45


def crop_ndvi_curve(day_of_year):
    """Piecewise-linear seasonal cropland NDVI."""
    d = day_of_year
    if d < 90:
        return 0.15
    if d < 150:
        return 0.15 + (PLATEAU_NDVI - 0.15) * (d - 90) / 60
    if d < 270:
        return PLATEAU_NDVI
    if d < 320:
        return PLATEAU_NDVI - (PLATEAU_NDVI - 0.2) * (d - 270) / 50
    return 0.2


def quadrant_truth(h, w):
    """1 = cropland in the top-left and bottom-right quadrants."""
    rows = np.arange(h)[:, None] < h // 2
    cols = np.arange(w)[None, :] < w // 2
    return (rows == cols).astype(np.uint8)


def _bands_for_ndvi(nd, rng, shape):
    red = 1500.0 + rng.normal(0, 60, shape)
    nir = red * (1.0 + nd) / (1.0 - nd)
    blue = 900.0 + rng.normal(0, 50, shape)
    green = 1100.0 + rng.normal(0, 50, shape)
    return blue, green, red, nir


def make_scene(tile_path, labels_path, h=128, w=128, obs_step_days=5,
               cloud_frac=0.2, seed=9, block_px=32, margin_px=6,
               crop_noise=0.02, noncrop_noise=0.06):
    """Write a raw dated BSTK tile and a label GeoJSON; returns the truth grid."""
    rng = np.random.default_rng(seed)
    truth = quadrant_truth(h, w)
    # north-up transform: x grows with col, y shrinks with row
    georef = GeoRef((0.0, GSD, 0.0, h * GSD, 0.0, -GSD), "EPSG:32643")
    dates = []
    day = datetime.date(2020, 1, 1)
    while day.year == 2020:
        dates.append(day)
        day += datetime.timedelta(days=obs_step_days)
    pixels = np.zeros((len(dates), 5, h, w), dtype=np.uint16)
    for ti, date in enumerate(dates):
        doy = date.timetuple().tm_yday
        nd = np.where(truth == 1,
                      crop_ndvi_curve(doy) + rng.normal(0, crop_noise, (h, w)),
                      NONCROP_NDVI + rng.normal(0, noncrop_noise, (h, w)))
        nd = np.clip(nd, -0.9, 0.9)
        blue, green, red, nir = _bands_for_ndvi(nd, rng, (h, w))
        scl = np.full((h, w), 4, dtype=np.uint16)
        cloudy = rng.random((h, w)) < cloud_frac
        scl[cloudy] = 9
        for plane, cloud_dn in zip((blue, green, red, nir),
                                   (8000.0, 8200.0, 8400.0, 8600.0)):
            plane[cloudy] = cloud_dn + rng.normal(0, 100, int(cloudy.sum()))
        stackvals = np.stack([blue, green, red, nir, scl.astype(np.float64)])
        pixels[ti] = np.clip(np.rint(stackvals), 1, 65535).astype(np.uint16)
    stack = BandStack(georef, ["B02", "B03", "B04", "B08", "SCL"],
                      [d.isoformat() for d in dates], pixels)
    write_bandstack(stack, tile_path)

    features = []
    for br in range(h // block_px):
        for bc in range(w // block_px):
            r0 = br * block_px + margin_px
            r1 = (br + 1) * block_px - margin_px
            c0 = bc * block_px + margin_px
            c1 = (bc + 1) * block_px - margin_px
            cls = int(truth[r0, c0])
            ring = [_corner(georef, r, c) for r, c in
                    ((r0, c0), (r0, c1), (r1, c1), (r1, c0), (r0, c0))]
            features.append({
                "type": "Feature",
                "properties": {"id": f"poly_{br}_{bc}", "class": cls},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            })
    with open(labels_path, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh)
    return truth


def _corner(georef, row, col):
    t = georef.transform
    return [t[0] + col * t[1] + row * t[2], t[3] + col * t[4] + row * t[5]]


def random_polygon_layout(seed, n_polys=12, h=40, w=40, k=3, block=100.0):
    """Random disjoint square polygons rasterized on a 10 m grid, with a
    reseeded fold assignment and a placeholder feature matrix."""
    from cropmask.features import FeatureMatrix
    from cropmask.raster import UNLABELED, LabeledPolygon, rasterize_labels
    from cropmask.spatial_cv import assign_with_reseed, polygons_extent

    rng = np.random.default_rng(seed)
    georef = GeoRef((0.0, GSD, 0.0, h * GSD, 0.0, -GSD), "x")
    polys = []
    placed = []
    while len(polys) < n_polys:
        r0 = int(rng.integers(0, h - 6))
        c0 = int(rng.integers(0, w - 6))
        if any(abs(r0 - r) < 7 and abs(c0 - c) < 7 for r, c in placed):
            continue
        placed.append((r0, c0))
        x0, y0 = c0 * GSD, (h - r0 - 5) * GSD
        ring = [[x0, y0], [x0 + 48.0, y0], [x0 + 48.0, y0 + 48.0],
                [x0, y0 + 48.0], [x0, y0]]
        polys.append(LabeledPolygon(f"p{len(polys)}", [[ring]],
                                    int(len(polys) % 2)))
    raster = rasterize_labels(polys, georef, (h, w))
    grid, assign = assign_with_reseed(polys, polygons_extent(polys), block, k,
                                      seed)
    rows, cols = np.nonzero(raster.values != UNLABELED)
    matrix = FeatureMatrix(np.zeros((len(rows), 1)), ["f0"],
                           np.column_stack([rows, cols]).astype(np.int32))
    return polys, raster, assign, matrix


def scene_config(tile_path, labels_path, out_dir, block_size_m=320.0, seed=7,
                 model_params=None):
    """Config document for the synthetic scene; defaults to the selected
    forest configuration (100 entropy trees, depth 15, half-size bootstrap)."""
    return {
        "paths": {"tiles": [str(tile_path)], "labels": str(labels_path),
                  "out_dir": str(out_dir)},
        "cv": {"k": 3, "block_size_m": block_size_m, "seed": seed},
        "model": {"kind": "rf",
                  "params": model_params or {
                      "n_estimators": 100, "criterion": "entropy",
                      "max_depth": 15, "max_samples": 0.5}},
        # scene-sized variogram settings (the defaults assume a full tile)
        "variogram": {"bin_width_m": 50.0, "max_lag_m": 600.0, "stride": 3,
                      "random_n": None},
    }

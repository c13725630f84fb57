"""Per-pixel feature engineering: NDVI plus the temporal, statistical,
differential, and spatial feature groups.

Full dimensionality is 667 = 70 temporal + 15 statistical + 52 differential
+ 530 spatial, over the fixed band order B02, B03, B04, B08, NDVI. Column
order is a frozen contract (see feature_names); models serialize it and
prediction refuses mismatched matrices.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .errors import ConfigError, DomainError, SchemaError
from .preprocess import WEEKS

FEATURE_BANDS = ("B02", "B03", "B04", "B08", "NDVI")
GROUPS = ("temporal", "statistical", "differential", "spatial")
SPATIAL_SCOPES = ("all", "ndvi", "none")
TEMPORAL_MODES = ("max", "sample")

# 13 four-week windows plus the one-week remainder
TEMPORAL_WINDOWS = tuple((s, min(s + 4, WEEKS)) for s in range(0, WEEKS, 4))
SAMPLE_WEEKS = tuple(range(0, WEEKS, 4))


@dataclass(frozen=True)
class FeatureSpec:
    groups: tuple = GROUPS
    spatial_scope: str = "all"
    temporal_mode: str = "max"

    def __post_init__(self):
        groups = tuple(g for g in GROUPS if g in self.groups)
        if set(self.groups) - set(GROUPS):
            raise ConfigError(f"unknown feature groups {set(self.groups) - set(GROUPS)}")
        if self.spatial_scope not in SPATIAL_SCOPES:
            raise ConfigError(f"unknown spatial scope {self.spatial_scope!r}")
        if self.temporal_mode not in TEMPORAL_MODES:
            raise ConfigError(f"unknown temporal mode {self.temporal_mode!r}")
        if ("spatial" in groups) == (self.spatial_scope == "none"):
            raise ConfigError("spatial_scope must be 'none' exactly when "
                              "the spatial group is absent")
        object.__setattr__(self, "groups", groups)

    def spatial_bands(self):
        if self.spatial_scope == "all":
            return FEATURE_BANDS
        if self.spatial_scope == "ndvi":
            return ("NDVI",)
        return ()

    def dimension(self):
        return len(feature_names(self))


def ndvi(nir, red):
    """(NIR - Red) / (NIR + Red), with 0 where the sum is 0."""
    nir = np.asarray(nir, dtype=np.float64)
    red = np.asarray(red, dtype=np.float64)
    den = nir + red
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den == 0.0, 0.0, (nir - red) / den)
    if out.ndim == 0:
        return float(out)
    return out


def feature_names(spec):
    """Canonical column names, frozen: concatenation order is temporal,
    statistical, differential, spatial."""
    names = []
    if "temporal" in spec.groups:
        if spec.temporal_mode == "max":
            names += [f"temporal_max_win{i:02d}_{b}"
                      for i in range(len(TEMPORAL_WINDOWS)) for b in FEATURE_BANDS]
        else:
            names += [f"temporal_val_w{w:02d}_{b}"
                      for w in SAMPLE_WEEKS for b in FEATURE_BANDS]
    if "statistical" in spec.groups:
        names += [f"stat_{b}_{s}" for b in FEATURE_BANDS for s in ("mean", "max", "std")]
    if "differential" in spec.groups:
        names += [f"diff_ndvi_w{w:02d}" for w in range(WEEKS - 1)]
    if "spatial" in spec.groups:
        names += [f"spatial_w{w:02d}_{b}_{s}"
                  for w in range(WEEKS) for b in spec.spatial_bands()
                  for s in ("mean", "std")]
    return names


def temporal_features(series, mode="max"):
    """70 values: per 4-week window (then the 1-week remainder) and band.

    ``series`` is (53, 5, ...); output is (70, ...), window-major then band.
    ``max`` takes the window maximum (default), ``sample`` the value at the
    window's first week.
    """
    _check_series(series)
    if mode == "max":
        blocks = [series[a:b].max(axis=0) for a, b in TEMPORAL_WINDOWS]
    elif mode == "sample":
        blocks = [series[w] for w in SAMPLE_WEEKS]
    else:
        raise ConfigError(f"unknown temporal mode {mode!r}")
    out = np.stack(blocks, axis=0)  # (14, 5, ...)
    return out.reshape((-1,) + out.shape[2:])


def statistical_features(series):
    """15 values: per band, mean/max/population-std over the 53 weeks."""
    _check_series(series)
    stats = np.stack([series.mean(axis=0), series.max(axis=0), series.std(axis=0)],
                     axis=1)  # (5, 3, ...)
    return stats.reshape((-1,) + stats.shape[2:])


def differential_features(ndvi_series):
    """52 values: NDVI week-to-week differences d[w] = v[w+1] - v[w]."""
    v = np.asarray(ndvi_series, dtype=np.float64)
    if v.shape[0] != WEEKS:
        raise DomainError(f"NDVI series must have {WEEKS} weeks")
    return v[1:] - v[:-1]


def spatial_features(series, bands=FEATURE_BANDS):
    """530 values per pixel: weekly 8-neighbor mean and population std.

    ``series`` is (53, 5, H, W); output is (2 * 53 * len(bands), H, W),
    week-major, then band, mean before std. Edge pixels use only the
    neighbors that exist.
    """
    _check_series(series)
    if series.ndim != 4:
        raise DomainError("spatial features need full (53, B, H, W) planes")
    planes = []
    for w in range(WEEKS):
        for b in bands:
            mean, std = kernels.neighbor_stats(
                np.ascontiguousarray(series[w, FEATURE_BANDS.index(b)]))
            planes.append(mean)
            planes.append(std)
    return np.stack(planes, axis=0)


def _check_series(series):
    if series.shape[0] != WEEKS or series.shape[1] != len(FEATURE_BANDS):
        raise DomainError(
            f"series must be (53, 5, ...), got {series.shape}")


def band_series(stack):
    """(53, 5, H, W) float array in the fixed feature band order, NDVI
    computed from B08 and B04."""
    missing = [b for b in ("B02", "B03", "B04", "B08") if b not in stack.band_names]
    if missing:
        raise SchemaError(f"stack lacks bands {missing}")
    nd = ndvi(stack.band("B08"), stack.band("B04"))
    return np.stack([stack.band("B02"), stack.band("B03"), stack.band("B04"),
                     stack.band("B08"), nd], axis=1)


@dataclass
class FeatureMatrix:
    values: np.ndarray       # (N, D) float64
    names: list
    pixel_index: np.ndarray  # (N, 2) int32 (row, col)
    labels: np.ndarray = None

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ConfigError("feature names must be unique")
        if self.values.shape[1] != len(self.names):
            raise ConfigError("column count does not match feature names")


def featurize(stack, spec, row_range=None, series=None):
    """Assemble the per-pixel feature matrix for a composite stack.

    Removed pixels are excluded. ``row_range=(r0, r1)`` restricts output to
    those pixel rows while still reading the one-row halo the 3x3 spatial
    stencil needs, so strip-wise assembly equals the whole-tile result.
    """
    if not spec.groups:
        raise ConfigError("feature spec selects no groups")
    if series is None:
        series = band_series(stack)
    h, w = series.shape[2:]
    r0, r1 = (0, h) if row_range is None else row_range
    if not 0 <= r0 < r1 <= h:
        raise ConfigError(f"bad row range ({r0}, {r1}) for height {h}")
    s0 = max(0, r0 - 1)
    slab = series[:, :, s0:min(h, r1 + 1), :]
    lo, hi = r0 - s0, r1 - s0

    blocks = []
    if "temporal" in spec.groups:
        blocks.append(temporal_features(slab, spec.temporal_mode)[:, lo:hi])
    if "statistical" in spec.groups:
        blocks.append(statistical_features(slab)[:, lo:hi])
    if "differential" in spec.groups:
        blocks.append(differential_features(slab[:, FEATURE_BANDS.index("NDVI")])[:, lo:hi])
    if "spatial" in spec.groups:
        blocks.append(spatial_features(slab, spec.spatial_bands())[:, lo:hi])
    feat = np.concatenate(blocks, axis=0)

    rows, cols = np.mgrid[r0:r1, 0:w]
    keep = ~stack.removed[r0:r1]
    values = feat.reshape(feat.shape[0], -1).T[keep.ravel()]
    pixel_index = np.column_stack([rows.ravel()[keep.ravel()],
                                   cols.ravel()[keep.ravel()]]).astype(np.int32)
    return FeatureMatrix(np.ascontiguousarray(values), feature_names(spec), pixel_index)


def attach_labels(matrix, label_raster):
    """Keep only rows whose pixel is labeled; fills ``labels`` from the raster."""
    from .raster import UNLABELED

    r, c = matrix.pixel_index[:, 0], matrix.pixel_index[:, 1]
    lab = label_raster.values[r, c]
    keep = lab != UNLABELED
    return FeatureMatrix(matrix.values[keep], list(matrix.names),
                         matrix.pixel_index[keep], lab[keep].astype(np.uint8))


# ---------------------------------------------------------------------------
# Feature matrix persistence: CSV and raw binary block + JSON sidecar


def write_feature_csv(matrix, path):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["row", "col"] + list(matrix.names)
        if matrix.labels is not None:
            header.append("label")
        writer.writerow(header)
        for i in range(matrix.values.shape[0]):
            rec = [int(matrix.pixel_index[i, 0]), int(matrix.pixel_index[i, 1])]
            rec += [repr(v) for v in matrix.values[i]]
            if matrix.labels is not None:
                rec.append(int(matrix.labels[i]))
            writer.writerow(rec)


def write_feature_bin(matrix, base_path):
    """<base>.f64 (N*D little-endian doubles), <base>.idx (N*2 int32),
    optional <base>.labels (N uint8), and <base>.json describing them."""
    import json

    base = str(base_path)
    n, d = matrix.values.shape
    with open(base + ".f64", "wb") as fh:
        fh.write(np.ascontiguousarray(matrix.values, dtype="<f8").tobytes())
    with open(base + ".idx", "wb") as fh:
        fh.write(np.ascontiguousarray(matrix.pixel_index, dtype="<i4").tobytes())
    meta = {"n": n, "d": d, "dtype": "f8", "names": list(matrix.names),
            "has_labels": matrix.labels is not None}
    if matrix.labels is not None:
        with open(base + ".labels", "wb") as fh:
            fh.write(np.ascontiguousarray(matrix.labels, dtype=np.uint8).tobytes())
    with open(base + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, separators=(",", ":"))


def read_feature_bin(base_path):
    import json

    base = str(base_path)
    with open(base + ".json", encoding="utf-8") as fh:
        meta = json.load(fh)
    n, d = meta["n"], meta["d"]
    values = np.fromfile(base + ".f64", dtype="<f8").reshape(n, d).astype(np.float64)
    pixel_index = np.fromfile(base + ".idx", dtype="<i4").reshape(n, 2).astype(np.int32)
    labels = None
    if meta.get("has_labels"):
        labels = np.fromfile(base + ".labels", dtype=np.uint8)
    return FeatureMatrix(values, list(meta["names"]), pixel_index, labels)

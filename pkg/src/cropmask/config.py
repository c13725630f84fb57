"""Pipeline configuration: one JSON document; CLI flags override keys
one-for-one (--seed -> cv.seed, --out -> paths.out_dir)."""

import copy
import json
from dataclasses import dataclass

from . import _kernels as kernels
from .errors import ConfigError
from .features import FeatureSpec
from .preprocess import IMPUTATIONS, NORMALIZATIONS

DEFAULTS = {
    "paths": {"tiles": [], "labels": "", "out_dir": "out"},
    "preprocess": {
        "scl_masked": [0, 1, 3, 7, 8, 9, 10],
        "imputation": "linear",
        "normalization": "as_reflectance",
        "year": 2020,
    },
    "features": {
        "groups": ["temporal", "statistical", "differential", "spatial"],
        "spatial_scope": "all",
        "temporal_mode": "max",
    },
    "cv": {"k": 3, "block_size_m": 2000.0, "seed": 0, "dead_zone_m": 0.0},
    "model": {"kind": "rf", "grid": None, "params": None},
    "evaluation": {"n_repeats": 10, "importance_threshold": 0.001, "regions": []},
    "predict": {"strip_height": 64},
    "variogram": {
        "bin_width_m": 250.0,
        "max_lag_m": 10000.0,
        "stride": 2000,
        "random_n": None,
    },
}


@dataclass
class PipelineConfig:
    doc: dict

    def __getitem__(self, dotted):
        cur = self.doc
        for part in dotted.split("."):
            cur = cur[part]
        return cur

    @property
    def tiles(self):
        return list(self.doc["paths"]["tiles"])

    @property
    def out_dir(self):
        return self.doc["paths"]["out_dir"]

    @property
    def labels_path(self):
        return self.doc["paths"]["labels"]

    def feature_spec(self):
        f = self.doc["features"]
        return FeatureSpec(tuple(f["groups"]), f["spatial_scope"], f["temporal_mode"])

    def canonical_json(self):
        return json.dumps(self.doc, sort_keys=True, separators=(",", ":"))

    def hash(self):
        return f"{kernels.fnv1a64(self.canonical_json().encode()):016x}"


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, path + key + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def make_config(doc=None, seed=None, out_dir=None):
    """Merge a user document over the defaults and validate it."""
    merged = _merge(DEFAULTS, doc or {})
    if seed is not None:
        merged["cv"]["seed"] = int(seed)
    if out_dir is not None:
        merged["paths"]["out_dir"] = str(out_dir)
    cfg = PipelineConfig(merged)
    _validate(cfg)
    return cfg


def load_config(path, seed=None, out_dir=None):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return make_config(doc, seed=seed, out_dir=out_dir)


def _validate(cfg):
    pp = cfg.doc["preprocess"]
    if pp["imputation"] not in IMPUTATIONS:
        raise ConfigError(f"imputation must be one of {IMPUTATIONS}")
    if pp["normalization"] not in NORMALIZATIONS:
        raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
    if not all(0 <= int(c) <= 11 for c in pp["scl_masked"]):
        raise ConfigError("scl_masked codes must lie in 0..11")
    cfg.feature_spec()  # raises ConfigError on bad group/scope combinations
    cv = cfg.doc["cv"]
    if cv["k"] < 2:
        raise ConfigError("cv.k must be at least 2")
    if cv["block_size_m"] <= 0:
        raise ConfigError("cv.block_size_m must be positive")
    if cv["dead_zone_m"] < 0:
        raise ConfigError("cv.dead_zone_m must be >= 0")
    model = cfg.doc["model"]
    if model["kind"] not in ("rf", "svm"):
        raise ConfigError("model.kind must be 'rf' or 'svm'")
    if cfg.doc["predict"]["strip_height"] < 1:
        raise ConfigError("predict.strip_height must be >= 1")
    ev = cfg.doc["evaluation"]
    if ev["n_repeats"] < 1:
        raise ConfigError("evaluation.n_repeats must be >= 1")

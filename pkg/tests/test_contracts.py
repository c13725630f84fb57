"""Cross-module contract details not covered by the per-module suites."""

import json

import numpy as np
import pytest

from cropmask.classifiers import SvmParams, train_svm
from cropmask.cli import main
from cropmask.errors import ConfigError, ConvergenceError, SchemaError
from cropmask.features import FeatureMatrix, FeatureSpec, featurize
from cropmask.preprocess import WEEKS, CompositeStack, normalize
from cropmask.raster import BandStack, GeoRef, write_bandstack
from synthgen import make_scene, scene_config


def test_scl_values_validated(georef):
    px = np.full((1, 1, 2, 2), 12, dtype=np.uint16)
    with pytest.raises(SchemaError):
        BandStack(georef, ["SCL"], [0], px)


def test_write_bandstack_checks_invariants_before_writing(tmp_path, georef):
    stack = BandStack(georef, ["B02"], [0], np.zeros((1, 1, 2, 2), np.uint16))
    stack.pixels = np.zeros((1, 2, 2, 2), np.uint16)  # corrupt after build
    target = tmp_path / "never.bstk"
    from cropmask.errors import InvariantError

    with pytest.raises(InvariantError):
        write_bandstack(stack, target)
    assert not target.exists()


def test_normalize_dispatch_on_composite_and_matrix():
    values = np.full((WEEKS, 1, 2, 2), 5000.0)
    stack = CompositeStack(GeoRef((0, 10, 0, 0, 0, -10), "x"), ["B04"], values,
                           np.ones((WEEKS, 2, 2), dtype=bool),
                           np.zeros((2, 2), dtype=bool))
    out = normalize(stack, "as_reflectance")
    assert isinstance(out, CompositeStack)
    assert (out.values == 0.5).all()
    with pytest.raises(ConfigError):
        normalize(stack, "standardize")

    matrix = FeatureMatrix(np.array([[1.0, 10.0], [3.0, 10.0]]), ["a", "b"],
                           np.zeros((2, 2), dtype=np.int32))
    scaled = normalize(matrix, "normalize")
    assert isinstance(scaled, FeatureMatrix)
    assert abs(scaled.values[:, 0].mean()) < 1e-12
    assert (scaled.values[:, 1] == 0).all()


def test_smo_pass_budget_raises_convergence_error():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 2))
    y = (rng.random(40) > 0.5).astype(int)
    with pytest.raises(ConvergenceError):
        train_svm(X, y, SvmParams(C=100.0, kernel="rbf", max_passes=1))


def test_preprocess_rerun_is_byte_identical(tmp_path):
    tile = tmp_path / "t.bstk"
    labels = tmp_path / "l.geojson"
    make_scene(tile, labels, h=32, w=32, block_px=16, margin_px=4, seed=2)
    config = tmp_path / "c.json"
    config.write_text(json.dumps(scene_config(tile, labels, tmp_path / "out")))
    assert main(["preprocess", "--config", str(config)]) == 0
    first = (tmp_path / "out" / "t.composite.bstk").read_bytes()
    removed_first = (tmp_path / "out" / "t.removed.pgm").read_bytes()
    assert main(["preprocess", "--config", str(config)]) == 0
    assert (tmp_path / "out" / "t.composite.bstk").read_bytes() == first
    assert (tmp_path / "out" / "t.removed.pgm").read_bytes() == removed_first


def test_predict_refuses_mismatched_feature_contract(tmp_path):
    tile = tmp_path / "t.bstk"
    labels = tmp_path / "l.geojson"
    make_scene(tile, labels, h=32, w=32, block_px=16, margin_px=4, seed=3)
    doc = scene_config(tile, labels, tmp_path / "out", block_size_m=80.0,
                       model_params={"n_estimators": 2, "max_depth": 3})
    config = tmp_path / "c.json"
    config.write_text(json.dumps(doc))
    for cmd in ("preprocess", "rasterize-labels", "featurize", "folds", "train"):
        assert main([cmd, "--config", str(config)]) == 0
    # model was trained on the full 667-column contract; a no-spatial config
    # must be rejected before prediction starts
    doc["features"] = {"groups": ["temporal", "statistical", "differential"],
                       "spatial_scope": "none"}
    config.write_text(json.dumps(doc))
    assert main(["predict", "--config", str(config)]) == 3
    assert not (tmp_path / "out" / "t.mask.pgm").exists()


def test_featurize_row_range_validation():
    values = np.full((WEEKS, 4, 4, 4), 100.0)
    stack = CompositeStack(GeoRef((0, 10, 0, 0, 0, -10), "x"),
                           ["B02", "B03", "B04", "B08"], values,
                           np.ones((WEEKS, 4, 4), dtype=bool),
                           np.zeros((4, 4), dtype=bool))
    with pytest.raises(ConfigError):
        featurize(stack, FeatureSpec(), row_range=(3, 2))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cropmask.diagnostics import (Semivariogram, class_ndvi_profile,
                                  empirical_semivariogram, fit_spherical,
                                  savgol_smooth, spherical_model, subsample)
from cropmask.errors import ConfigError
from cropmask.preprocess import WEEKS, CompositeStack
from cropmask.raster import UNLABELED, GeoRef, LabelRaster


def test_savgol_reproduces_cubic_polynomials_everywhere():
    x = np.arange(60, dtype=np.float64)
    for coeffs in ([3.0], [1.0, -2.0], [0.5, 1.0, -0.2], [2.0, 0.3, 0.01, -0.002]):
        series = np.polynomial.polynomial.polyval(x, coeffs)
        out = savgol_smooth(series, 9, 3)
        assert np.abs(out - series).max() < 1e-9


def test_savgol_constant_series_unchanged():
    out = savgol_smooth(np.full(30, 7.5), 9, 3)
    assert np.allclose(out, 7.5, atol=1e-12)


def test_savgol_matches_local_polyfit_oracle():
    rng = np.random.default_rng(0)
    series = rng.normal(size=40)
    window, order = 9, 3
    out = savgol_smooth(series, window, order)
    half = window // 2
    for center in range(half, 40 - half):
        seg = series[center - half:center + half + 1]
        coeffs = np.polyfit(np.arange(-half, half + 1), seg, order)
        assert abs(out[center] - np.polyval(coeffs, 0.0)) < 1e-9


def test_savgol_linearity():
    rng = np.random.default_rng(1)
    u, v = rng.normal(size=50), rng.normal(size=50)
    a, b = 2.5, -1.25
    for mode in ("polyfit", "mirror"):
        left = savgol_smooth(a * u + b * v, 9, 3, edge_mode=mode)
        right = (a * savgol_smooth(u, 9, 3, edge_mode=mode)
                 + b * savgol_smooth(v, 9, 3, edge_mode=mode))
        assert np.abs(left - right).max() < 1e-9


def test_savgol_mirror_mode_interior_matches_polyfit_mode():
    rng = np.random.default_rng(2)
    series = rng.normal(size=30)
    a = savgol_smooth(series, 7, 2, edge_mode="polyfit")
    b = savgol_smooth(series, 7, 2, edge_mode="mirror")
    assert np.allclose(a[3:-3], b[3:-3], atol=1e-12)


def test_savgol_parameter_validation():
    series = np.zeros(20)
    with pytest.raises(ConfigError):
        savgol_smooth(series, 8, 3)
    with pytest.raises(ConfigError):
        savgol_smooth(series, 7, 7)
    with pytest.raises(ConfigError):
        savgol_smooth(np.zeros(5), 7, 2)


# ---------------------------------------------------------------------------
# NDVI profiles


def composite_with_ndvi(nd_values, removed=None):
    """1-band NDVI composite holding the given (53, H, W) series."""
    h, w = nd_values.shape[1:]
    removed = removed if removed is not None else np.zeros((h, w), dtype=bool)
    validity = np.ones((WEEKS, h, w), dtype=bool) & ~removed
    return CompositeStack(GeoRef((0, 10, 0, 0, 0, -10), "x"), ["NDVI"],
                          nd_values[:, None], validity, removed)


def labels_grid(values):
    idx = np.where(values != UNLABELED, 0, -1).astype(np.int32)
    return LabelRaster(GeoRef((0, 10, 0, 0, 0, -10), "x"),
                       values.astype(np.uint8), idx, ["p0"])


def test_profile_identical_series_zero_std():
    nd = np.tile(np.linspace(0.1, 0.8, WEEKS)[:, None, None], (1, 3, 3))
    labels = labels_grid(np.full((3, 3), 1))
    profile = class_ndvi_profile(composite_with_ndvi(nd), labels)
    assert profile.classes[1]["std"].max() < 1e-12
    assert np.allclose(profile.classes[1]["mean"], np.linspace(0.1, 0.8, WEEKS))


def test_profile_constant_gap_between_classes():
    nd = np.zeros((WEEKS, 2, 2))
    nd[:, :, 0] = 0.8
    nd[:, :, 1] = 0.2
    values = np.array([[1, 0], [1, 0]])
    profile = class_ndvi_profile(composite_with_ndvi(nd), labels_grid(values))
    gap = profile.classes[1]["mean"] - profile.classes[0]["mean"]
    assert np.allclose(gap, 0.6)


def test_profile_matches_groupby_oracle():
    rng = np.random.default_rng(3)
    nd = rng.uniform(-0.2, 0.9, size=(WEEKS, 4, 4))
    values = rng.integers(0, 2, size=(4, 4))
    profile = class_ndvi_profile(composite_with_ndvi(nd), labels_grid(values))
    for cls in (0, 1):
        sel = values == cls
        for week in (0, 17, 52):
            group = nd[week][sel]
            assert abs(profile.classes[cls]["mean"][week] - group.mean()) < 1e-12
            assert abs(profile.classes[cls]["std"][week] - group.std()) < 1e-12


def test_profile_absent_class_reported_absent():
    nd = np.full((WEEKS, 2, 2), 0.5)
    profile = class_ndvi_profile(composite_with_ndvi(nd),
                                 labels_grid(np.full((2, 2), 1)))
    assert 0 not in profile.classes and 1 in profile.classes


# ---------------------------------------------------------------------------
# Semivariogram


def test_variogram_constant_field_zero():
    rng = np.random.default_rng(4)
    xy = rng.uniform(0, 1000, size=(40, 2))
    samples = np.column_stack([xy, np.full(40, 3.3)])
    vg = empirical_semivariogram(samples, 100, 1500)
    assert (vg.gamma == 0).all()
    assert (vg.counts > 0).all()


def test_variogram_two_points():
    samples = np.array([[0.0, 0.0, 0.0], [300.0, 400.0, 2.0]])  # distance 500
    vg = empirical_semivariogram(samples, 100, 1000)
    assert len(vg.gamma) == 1
    assert vg.bin_centers[0] == 550.0  # bin [500, 600)
    assert vg.counts[0] == 1
    assert vg.gamma[0] == 2.0  # (1/2) * (2 - 0)^2


def test_variogram_matches_pairwise_oracle():
    rng = np.random.default_rng(5)
    n = 150
    samples = np.column_stack([rng.uniform(0, 5000, (n, 2)),
                               rng.normal(size=n)])
    bin_width, max_lag = 250.0, 4000.0
    vg = empirical_semivariogram(samples, bin_width, max_lag)
    nbins = int(np.ceil(max_lag / bin_width))
    counts = np.zeros(nbins, dtype=int)
    sums = np.zeros(nbins)
    for i in range(n):
        for j in range(i + 1, n):
            d = np.hypot(samples[i, 0] - samples[j, 0],
                         samples[i, 1] - samples[j, 1])
            if d < max_lag:
                b = int(d // bin_width)
                counts[b] += 1
                sums[b] += (samples[i, 2] - samples[j, 2]) ** 2
    nonempty = counts > 0
    assert np.array_equal(vg.counts, counts[nonempty])
    expected = sums[nonempty] / (2 * counts[nonempty])
    assert np.abs(vg.gamma - expected).max() < 1e-9


def test_variogram_shift_invariance_and_quadratic_scaling():
    rng = np.random.default_rng(6)
    samples = np.column_stack([rng.uniform(0, 2000, (60, 2)), rng.normal(size=60)])
    base = empirical_semivariogram(samples, 200, 1500)
    shifted = samples.copy()
    shifted[:, 2] += 17.0
    assert np.allclose(
        empirical_semivariogram(shifted, 200, 1500).gamma, base.gamma, atol=1e-9)
    scaled = samples.copy()
    scaled[:, 2] *= 3.0
    assert np.allclose(
        empirical_semivariogram(scaled, 200, 1500).gamma, 9.0 * base.gamma,
        rtol=1e-12)


def test_subsample_stride_and_random():
    samples = np.column_stack([np.arange(100), np.arange(100), np.arange(100)])
    assert len(subsample(samples, stride=10)) == 10
    r = subsample(samples, random_n=7, seed=1)
    assert len(r) == 7
    assert np.array_equal(r, subsample(samples, random_n=7, seed=1))


def test_spherical_model_shape():
    h = np.linspace(0, 5000, 100)
    g = spherical_model(h, 0.1, 0.9, 3000.0)
    assert g[0] == pytest.approx(0.1)
    assert spherical_model(3000.0, 0.1, 0.9, 3000.0) == pytest.approx(1.0)
    assert (np.diff(g) >= -1e-12).all()
    assert np.allclose(g[h >= 3000], 1.0)


def test_fit_recovers_forward_simulated_model():
    bin_width, max_lag = 250.0, 10000.0
    centers = (np.arange(40) + 0.5) * bin_width
    gamma = spherical_model(centers, 0.0, 1.0, 3000.0)
    vg = Semivariogram(centers, np.full(40, 200), gamma, bin_width, max_lag)
    fit = fit_spherical(vg)
    assert abs(fit["sill"] - 1.0) <= 0.05
    assert abs(fit["range"] - 3000.0) <= 0.05 * 3000.0
    assert fit["nugget"] <= 0.05


def test_fit_pure_nugget():
    centers = (np.arange(20) + 0.5) * 100.0
    vg = Semivariogram(centers, np.full(20, 50), np.full(20, 0.7), 100.0, 2000.0)
    fit = fit_spherical(vg)
    assert abs(fit["nugget"] + fit["sill"] - 0.7) <= 0.05 * 0.7


def test_fit_degenerate_all_zero():
    centers = (np.arange(5) + 0.5) * 100.0
    vg = Semivariogram(centers, np.full(5, 10), np.zeros(5), 100.0, 1000.0)
    fit = fit_spherical(vg)
    assert fit == {"nugget": 0.0, "sill": 0.0, "range": 50.0, "degenerate": True}


def test_fit_never_worse_than_coarse_grid():
    rng = np.random.default_rng(7)
    centers = (np.arange(30) + 0.5) * 200.0
    gamma = spherical_model(centers, 0.2, 0.8, 2500.0) + rng.normal(0, 0.03, 30)
    gamma = np.clip(gamma, 0, None)
    vg = Semivariogram(centers, np.full(30, 80), gamma, 200.0, 6000.0)
    fit = fit_spherical(vg)

    def objective(n, s, a):
        resid = gamma - spherical_model(centers, n, s, a)
        return (vg.counts * resid ** 2).sum()

    best_fit = objective(fit["nugget"], fit["sill"], fit["range"])
    gmax = gamma.max()
    for n in np.linspace(0, gmax, 9):
        for s in np.linspace(0, 1.2 * gmax, 13):
            for a in np.linspace(6000 / 25, 6000, 25):
                assert best_fit <= objective(n, s, a) + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_savgol_linearity_property(seed):
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=25), rng.normal(size=25)
    left = savgol_smooth(3.0 * u - 0.5 * v, 9, 3)
    right = 3.0 * savgol_smooth(u, 9, 3) - 0.5 * savgol_smooth(v, 9, 3)
    assert np.abs(left - right).max() < 1e-9

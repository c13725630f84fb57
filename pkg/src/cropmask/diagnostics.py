"""Label-quality and spatial-autocorrelation diagnostics: Savitzky-Golay
smoothing, per-class weekly NDVI profiles, and the empirical semivariogram
with a spherical model fit."""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter
from scipy.spatial.distance import pdist

from .errors import ConfigError, DomainError
from .features import ndvi
from .preprocess import WEEKS

EDGE_MODES = {"polyfit": "interp", "mirror": "mirror"}


def savgol_smooth(series, window, order, edge_mode="polyfit"):
    """Local least-squares polynomial smoothing.

    Each point is replaced by the value at the center of an order-``order``
    polynomial fit over the surrounding ``window`` points. ``polyfit`` edges
    evaluate the first/last full window's polynomial at the edge positions,
    which preserves exact reproduction of degree-<=order polynomials there;
    ``mirror`` reflects the series instead.
    """
    series = np.asarray(series, dtype=np.float64)
    if window % 2 != 1:
        raise ConfigError("window must be odd")
    if not order < window:
        raise ConfigError("order must be smaller than window")
    if window > series.shape[-1]:
        raise ConfigError("window cannot exceed the series length")
    if edge_mode not in EDGE_MODES:
        raise ConfigError(f"edge_mode must be one of {sorted(EDGE_MODES)}")
    return savgol_filter(series, window, order, mode=EDGE_MODES[edge_mode])


@dataclass
class NdviProfile:
    """Weekly NDVI mean/std per class; absent classes carry no entry."""

    classes: dict  # cls -> {"mean": (53,), "std": (53,), "smoothed": (53,), "pixels": int}
    window: int
    order: int

    def write_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "week", "mean", "std", "smoothed"])
            for cls in sorted(self.classes):
                p = self.classes[cls]
                for w in range(WEEKS):
                    writer.writerow([cls, w, repr(float(p["mean"][w])),
                                     repr(float(p["std"][w])),
                                     repr(float(p["smoothed"][w]))])


def profile_from_series(series_by_class, smooth=(9, 3)):
    """NdviProfile from per-class (53, n_pixels) NDVI series arrays."""
    window, order = smooth
    classes = {}
    for cls, series in series_by_class.items():
        if series.shape[1] == 0:
            continue
        mean = series.mean(axis=1)
        classes[cls] = {
            "mean": mean,
            "std": series.std(axis=1),
            "smoothed": savgol_smooth(mean, window, order),
            "pixels": series.shape[1],
        }
    return NdviProfile(classes, window, order)


def ndvi_series_by_class(stack, labels):
    """Per class, the (53, n_pixels) NDVI series of its labeled pixels."""
    if "NDVI" in stack.band_names:
        nd = stack.band("NDVI")
    else:
        nd = ndvi(stack.band("B08"), stack.band("B04"))
    return {cls: nd[:, (labels.values == cls) & ~stack.removed]
            for cls in (0, 1)}


def class_ndvi_profile(stack, labels, smooth=(9, 3)):
    """Per class: weekly mean and population std of NDVI over labeled
    pixels, plus the Savitzky-Golay-smoothed mean. Classes with no labeled
    pixels are absent from the result."""
    return profile_from_series(ndvi_series_by_class(stack, labels), smooth)


# ---------------------------------------------------------------------------
# Semivariogram


@dataclass
class Semivariogram:
    bin_centers: np.ndarray  # meters, non-empty bins only
    counts: np.ndarray       # pairs per bin
    gamma: np.ndarray        # half mean squared value difference
    bin_width: float
    max_lag: float
    fit: dict = None         # {"nugget", "sill", "range", "degenerate"}

    def write_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lag", "count", "gamma"])
            for h, n, g in zip(self.bin_centers, self.counts, self.gamma):
                writer.writerow([repr(float(h)), int(n), repr(float(g))])

    def write_fit_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"bin_width": self.bin_width, "max_lag": self.max_lag,
                       "fit": self.fit}, fh, sort_keys=True, separators=(",", ":"))


def subsample(samples, stride=2000, random_n=None, seed=0):
    """Thin a sample array, by stride (default, one every ``stride``) or by
    a seeded draw of ``random_n`` rows."""
    samples = np.asarray(samples, dtype=np.float64)
    if random_n is not None:
        if random_n >= len(samples):
            return samples
        idx = np.sort(np.random.default_rng(seed).choice(
            len(samples), size=random_n, replace=False))
        return samples[idx]
    return samples[::max(1, int(stride))]


def empirical_semivariogram(samples, bin_width, max_lag, subsample_stride=1):
    """Half the mean squared value difference per distance bin.

    ``samples`` is (n, 3): x, y, value, thinned by ``subsample_stride``
    before pairing. Pairs at distance >= max_lag are dropped; bin i spans
    [i*bin_width, (i+1)*bin_width) and reports its center. Empty bins are
    omitted.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if subsample_stride > 1:
        samples = subsample(samples, stride=subsample_stride)
    if samples.ndim != 2 or samples.shape[1] != 3 or len(samples) < 2:
        raise DomainError("need at least two (x, y, value) samples")
    if bin_width <= 0 or max_lag <= 0:
        raise ConfigError("bin_width and max_lag must be positive")
    d = pdist(samples[:, :2])
    dv = pdist(samples[:, 2:3], metric="sqeuclidean")  # (value_i - value_j)^2
    keep = d < max_lag
    bins = (d[keep] / bin_width).astype(np.int64)
    nbins = int(math.ceil(max_lag / bin_width))
    counts = np.bincount(bins, minlength=nbins)
    sums = np.bincount(bins, weights=dv[keep], minlength=nbins)
    nonempty = counts > 0
    centers = (np.arange(nbins) + 0.5) * bin_width
    gamma = np.zeros(nbins)
    gamma[nonempty] = sums[nonempty] / (2.0 * counts[nonempty])
    return Semivariogram(centers[nonempty], counts[nonempty], gamma[nonempty],
                         float(bin_width), float(max_lag))


def spherical_model(h, nugget, sill, rng):
    """nugget + sill*(1.5 h/a - 0.5 (h/a)^3) up to the range, flat beyond."""
    h = np.asarray(h, dtype=np.float64)
    t = np.minimum(h / rng, 1.0)
    return nugget + sill * (1.5 * t - 0.5 * t ** 3)


def _golden_min(f, lo, hi, iters=50):
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    return c if fc < fd else d


def fit_spherical(vg, grid_steps=(9, 13, 25), sweeps=4):
    """Weighted least-squares spherical fit: coarse (nugget, sill, range)
    grid, then cyclic per-coordinate golden-section refinement.

    The refined point never scores worse than the best grid point. An
    all-zero variogram short-circuits to the degenerate answer.
    """
    if len(vg.bin_centers) < 3:
        raise DomainError("need at least 3 non-empty bins to fit")
    h = vg.bin_centers
    g = vg.gamma
    w = vg.counts.astype(np.float64)
    if not g.any():
        return {"nugget": 0.0, "sill": 0.0, "range": float(h[0]),
                "degenerate": True}

    def objective(theta):
        n, s, a = theta
        resid = g - spherical_model(h, n, s, a)
        return float((w * resid * resid).sum())

    gmax = float(g.max())
    nugget_grid = np.linspace(0.0, gmax, grid_steps[0])
    sill_grid = np.linspace(0.0, 1.2 * gmax, grid_steps[1])
    range_grid = np.linspace(vg.max_lag / grid_steps[2], vg.max_lag, grid_steps[2])
    best = None
    for n in nugget_grid:
        for s in sill_grid:
            for a in range_grid:
                val = objective((n, s, a))
                if best is None or val < best[0]:
                    best = (val, [n, s, a])
    score, theta = best
    bounds = [(0.0, 2.0 * gmax), (0.0, 2.4 * gmax),
              (vg.max_lag * 1e-6, vg.max_lag)]
    for _ in range(sweeps):
        for ci in range(3):
            def along(v, _ci=ci):
                trial = list(theta)
                trial[_ci] = v
                return objective(trial)

            cand = _golden_min(along, *bounds[ci])
            if along(cand) < score:
                theta[ci] = cand
                score = objective(theta)
    return {"nugget": float(theta[0]), "sill": float(theta[1]),
            "range": float(theta[2]), "degenerate": False}

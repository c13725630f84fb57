"""Scene-classification cloud masking, weekly compositing, gap imputation,
and the four normalization methods.

A year is binned into 53 weeks: 7-day bins anchored at January 1st, with the
final bin absorbing the 1-2 remainder days, so the composite length is 53
for any year. Compositing picks, per pixel and bin, the earliest observation
that both passes the cloud mask and carries no nodata band value.
"""

import datetime
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, InvariantError
from .raster import BandStack, GeoRef

WEEKS = 53

# SCL codes treated as unusable: nodata, saturated/defective, cloud shadow,
# unclassified (stand-in for low-probability cloud), medium/high-probability
# cloud, thin cirrus.
DEFAULT_MASKED_SCL = frozenset({0, 1, 3, 7, 8, 9, 10})

NORMALIZATIONS = ("as_float", "as_reflectance", "standardize", "normalize")
STACK_NORMALIZATIONS = ("as_float", "as_reflectance")
IMPUTATIONS = ("linear", "ffill")

U16_MAX = 65535.0
REFLECTANCE_SCALE = 10000.0


@dataclass(frozen=True)
class CloudMaskPolicy:
    masked_scl_codes: frozenset = DEFAULT_MASKED_SCL

    def __post_init__(self):
        codes = frozenset(int(c) for c in self.masked_scl_codes)
        if not all(0 <= c <= 11 for c in codes):
            raise ConfigError("SCL codes must lie in 0..11")
        object.__setattr__(self, "masked_scl_codes", codes)


def cloud_mask(scl_plane, policy=CloudMaskPolicy()):
    """Boolean usability grid: True wherever the SCL code is not masked."""
    scl = np.asarray(scl_plane)
    return ~np.isin(scl, sorted(policy.masked_scl_codes))


def week_of(date):
    """Week bin 0..52 for a date; the last bin holds the year's remainder days."""
    return min((date.timetuple().tm_yday - 1) // 7, WEEKS - 1)


@dataclass
class CompositeStack:
    """53-week composite: float band values plus observation bookkeeping.

    ``values`` holds digital numbers as float64 so that imputation can fill
    fractional values exactly; ``validity`` marks weeks with a real
    observation (before imputation), ``removed`` marks pixels that had none
    all year.
    """

    georef: GeoRef
    band_names: list
    values: np.ndarray    # (53, B, H, W) float64
    validity: np.ndarray  # (53, H, W) bool
    removed: np.ndarray   # (H, W) bool

    def __post_init__(self):
        if self.values.shape[0] != WEEKS or self.validity.shape[0] != WEEKS:
            raise InvariantError("composite must span exactly 53 weeks")
        if self.removed.any() and self.validity[:, self.removed].any():
            raise InvariantError("removed pixels must be invalid at every week")

    @property
    def shape(self):
        return self.values.shape

    def band(self, name):
        return self.values[:, self.band_names.index(name)]

    def to_bandstack(self):
        px = np.rint(self.values).astype(np.uint16)
        return BandStack(self.georef, list(self.band_names), list(range(WEEKS)), px)


def composite_from_bandstack(stack, removed=None, validity=None):
    """Rebuild a CompositeStack from a persisted 53-week BSTK."""
    t, b, h, w = stack.pixels.shape
    if t != WEEKS:
        raise DomainError(f"expected a 53-week stack, got {t} steps")
    if validity is None:
        validity = np.ones((WEEKS, h, w), dtype=bool)
    if removed is None:
        removed = np.zeros((h, w), dtype=bool)
    validity = validity & ~removed[None, :, :]
    return CompositeStack(stack.georef, list(stack.band_names),
                          stack.pixels.astype(np.float64), validity, removed)


def weekly_composite(observations, year, georef=None, band_names=None, nodata=0):
    """Composite dated observations into the fixed 53-week series.

    ``observations`` is an iterable of ``(date, bands, usable)`` with
    ``bands`` shaped (B, H, W) uint16 and ``usable`` a boolean (H, W) grid
    from the cloud mask. Per pixel and week the earliest usable observation
    whose bands are all non-nodata wins.
    """
    obs = sorted(observations, key=lambda o: o[0])
    if not obs:
        raise DomainError("no observations to composite")
    for date, _, _ in obs:
        if date.year != year:
            raise DomainError(f"observation {date} outside target year {year}")
    nbands, h, w = obs[0][1].shape
    values = np.zeros((WEEKS, nbands, h, w), dtype=np.float64)
    validity = np.zeros((WEEKS, h, w), dtype=bool)
    for date, bands, usable in obs:
        if bands.shape != (nbands, h, w) or usable.shape != (h, w):
            raise DomainError("observations must share one grid")
        wk = week_of(date)
        valid_px = usable & (bands != nodata).all(axis=0)
        new = valid_px & ~validity[wk]
        if new.any():
            values[wk, :, new] = bands[:, new].T
            validity[wk][new] = True
    removed = ~validity.any(axis=0)
    return CompositeStack(georef, list(band_names or []), values, validity, removed)


def composite_bandstack(stack, policy, year):
    """Cloud-mask a dated raw stack on its SCL band and composite it."""
    if "SCL" not in stack.band_names:
        raise DomainError("raw stack has no SCL band to cloud-mask with")
    scl_idx = stack.band_names.index("SCL")
    keep = [i for i, n in enumerate(stack.band_names) if n != "SCL"]
    observations = []
    for ti, t in enumerate(stack.time_axis):
        date = t if isinstance(t, datetime.date) else datetime.date.fromisoformat(t)
        usable = cloud_mask(stack.pixels[ti, scl_idx], policy)
        observations.append((date, stack.pixels[ti][keep], usable))
    return weekly_composite(observations, year, georef=stack.georef,
                            band_names=[stack.band_names[i] for i in keep],
                            nodata=stack.nodata)


def _prev_valid(validity):
    """Index of the most recent valid week at or before t, -1 if none."""
    t, h, w = validity.shape
    idx = np.full((t, h, w), -1, dtype=np.int32)
    weeks = np.arange(t, dtype=np.int32)
    cur = np.full((h, w), -1, dtype=np.int32)
    for ti in range(t):
        cur = np.where(validity[ti], weeks[ti], cur)
        idx[ti] = cur
    return idx


def impute(stack, method):
    """Fill unobserved weeks along the time axis; removed pixels stay zero.

    ``linear`` interpolates interior gaps between the nearest valid weeks
    (computed as (v_prev*(nxt-t) + v_next*(t-prev)) / (nxt-prev), which is
    exact for integer-affine series) and extends the nearest valid value at
    the ends. ``ffill`` carries the last valid value forward and back-fills
    leading gaps from the first valid one.
    """
    if method not in IMPUTATIONS:
        raise ConfigError(f"unknown imputation {method!r}")
    prev = _prev_valid(stack.validity)
    nxt = stack.validity.shape[0] - 1 - _prev_valid(stack.validity[::-1])[::-1]
    # nxt now holds the next valid week at or after t, or T when none exists
    out = stack.values.copy()
    has_prev = prev >= 0
    has_next = nxt <= WEEKS - 1
    t_grid = np.arange(WEEKS, dtype=np.float64)[:, None, None]
    for b in range(stack.values.shape[1]):
        vals = stack.values[:, b]
        vp = np.take_along_axis(vals, np.maximum(prev, 0).astype(np.int64), axis=0)
        vn = np.take_along_axis(vals, np.minimum(nxt, WEEKS - 1).astype(np.int64), axis=0)
        if method == "ffill":
            filled = np.where(has_prev, vp, vn)
        else:
            pf = prev.astype(np.float64)
            nf = nxt.astype(np.float64)
            both = has_prev & has_next
            with np.errstate(divide="ignore", invalid="ignore"):
                interp = (vp * (nf - t_grid) + vn * (t_grid - pf)) / (nf - pf)
            filled = np.where(both, np.where(prev == nxt, vp, interp),
                              np.where(has_prev, vp, vn))
        out[:, b] = np.where(stack.validity, vals, filled)
        out[:, b][:, stack.removed] = vals[:, stack.removed]
    return CompositeStack(stack.georef, list(stack.band_names), out,
                          stack.validity.copy(), stack.removed.copy())


# ---------------------------------------------------------------------------
# Normalization


def normalize_stack(stack, method):
    """Pointwise normalization of composite digital numbers.

    Only the two global methods apply to stacks; the per-feature methods are
    defined over feature-matrix columns.
    """
    if method not in STACK_NORMALIZATIONS:
        raise ConfigError(
            f"{method!r} is a per-feature method; normalize the feature matrix instead")
    scale = U16_MAX if method == "as_float" else REFLECTANCE_SCALE
    return CompositeStack(stack.georef, list(stack.band_names),
                          stack.values / scale, stack.validity.copy(),
                          stack.removed.copy())


def column_scaling(values, method):
    """Per-column (offset, scale) pair for a feature matrix.

    standardize -> min/max scaling, normalize -> zero mean and unit
    population variance; the two global methods become constant columnwise
    scalings. Constant columns get scale 0, which apply_column_scaling maps
    to output 0.
    """
    if method not in NORMALIZATIONS:
        raise ConfigError(f"unknown normalization {method!r}")
    d = values.shape[1]
    if method == "as_float":
        return np.zeros(d), np.full(d, U16_MAX)
    if method == "as_reflectance":
        return np.zeros(d), np.full(d, REFLECTANCE_SCALE)
    if method == "standardize":
        lo = values.min(axis=0)
        return lo, values.max(axis=0) - lo
    return values.mean(axis=0), values.std(axis=0)


def apply_column_scaling(values, offset, scale):
    out = np.zeros_like(values, dtype=np.float64)
    nz = scale != 0
    out[:, nz] = (values[:, nz] - offset[nz]) / scale[nz]
    return out


def normalize(data, method):
    """Normalize a CompositeStack or a feature matrix (spec enums).

    Stacks accept only the global methods; for matrices all four apply,
    columnwise. Returns the same structure with real-valued content.
    """
    if isinstance(data, CompositeStack):
        return normalize_stack(data, method)
    from .features import FeatureMatrix  # circular at module load only

    if isinstance(data, FeatureMatrix):
        offset, scale = column_scaling(data.values, method)
        return FeatureMatrix(apply_column_scaling(data.values, offset, scale),
                             list(data.names), data.pixel_index, data.labels)
    values = np.asarray(data, dtype=np.float64)
    offset, scale = column_scaling(values, method)
    return apply_column_scaling(values, offset, scale)

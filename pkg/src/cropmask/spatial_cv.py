"""Spatial k-fold cross-validation: block grids, polygon-to-fold mapping,
dead-zone exclusion, and pixel-level split generation.

Blocks are axis-aligned squares tiling the label extent; each block is
assigned a fold by a seeded draw and every polygon inherits the fold of the
block containing its area-weighted centroid, so all pixels of one polygon
always share a fold.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FoldError, GeometryError, InvariantError
from .raster import UNLABELED


@dataclass
class BlockGrid:
    origin: tuple          # (xmin, ymin)
    block_size: float
    cols: int
    rows: int
    block_to_fold: np.ndarray  # (rows, cols) int16
    k: int
    seed: int              # seed actually used (after any reseeding)

    def fold_of_block(self, row, col):
        return int(self.block_to_fold[row, col])


def build_block_grid(extent, block_size, k, seed):
    """Tile the extent with square blocks and deal them to k folds.

    Reseeds deterministically (seed+1, seed+2, ...) until every fold owns at
    least one block; the seed that produced the assignment is recorded on
    the grid.
    """
    xmin, ymin, xmax, ymax = (float(v) for v in extent)
    if not (xmax > xmin and ymax > ymin):
        raise GeometryError(f"degenerate extent {extent}")
    if block_size <= 0:
        raise ConfigError("block_size must be positive")
    if k < 2:
        raise ConfigError("need at least 2 folds")
    cols = max(1, math.ceil((xmax - xmin) / block_size))
    rows = max(1, math.ceil((ymax - ymin) / block_size))
    if rows * cols < k:
        raise FoldError(f"{rows * cols} blocks cannot host {k} folds")
    s = int(seed)
    while True:
        draw = np.random.default_rng(s).integers(0, k, size=rows * cols)
        if len(np.unique(draw)) == k:
            break
        s += 1
    return BlockGrid((xmin, ymin), float(block_size), cols, rows,
                     draw.reshape(rows, cols).astype(np.int16), k, s)


def block_of_point(grid, x, y):
    """(row, col) of the block containing a point. A point exactly on a
    block edge belongs to the lexicographically smaller (row, col) index."""
    ix = _axis_index(x - grid.origin[0], grid.block_size, grid.cols)
    iy = _axis_index(y - grid.origin[1], grid.block_size, grid.rows)
    if ix is None or iy is None:
        raise GeometryError(f"point ({x}, {y}) outside the block grid")
    return iy, ix


def _axis_index(offset, size, n):
    f = offset / size
    if f < 0 or f > n:
        return None
    i = math.floor(f)
    if f == i and i > 0:
        i -= 1  # edge tie -> smaller index
    if i >= n:
        return None
    return i


@dataclass
class FoldAssignment:
    k: int
    polygon_fold: dict              # polygon id -> fold index
    dead_zone_radius: float = 0.0
    excluded: list = field(default_factory=list)  # per fold, set of polygon ids

    def __post_init__(self):
        if not self.excluded:
            self.excluded = [set() for _ in range(self.k)]
        for f, excl in enumerate(self.excluded):
            own = {p for p, pf in self.polygon_fold.items() if pf == f}
            if excl & own:
                raise InvariantError("a fold cannot exclude its own polygons")

    def fold_sizes(self):
        sizes = [0] * self.k
        for f in self.polygon_fold.values():
            sizes[f] += 1
        return sizes


def assign_folds(polys, grid):
    """Map each polygon to the fold of the block holding its centroid."""
    mapping = {}
    for poly in polys:
        if poly.id in mapping:
            raise InvariantError(f"duplicate polygon id {poly.id!r}")
        row, col = block_of_point(grid, *poly.centroid())
        mapping[poly.id] = grid.fold_of_block(row, col)
    return FoldAssignment(grid.k, mapping)


def assign_with_reseed(polys, extent, block_size, k, seed):
    """Grid + assignment, reseeding until every fold holds a polygon."""
    s = int(seed)
    while True:
        grid = build_block_grid(extent, block_size, k, s)
        assign = assign_folds(polys, grid)
        if all(n > 0 for n in assign.fold_sizes()):
            return grid, assign
        s = grid.seed + 1


def polygons_extent(polys):
    bounds = np.array([p.bounds() for p in polys])
    return (bounds[:, 0].min(), bounds[:, 1].min(),
            bounds[:, 2].max(), bounds[:, 3].max())


def apply_dead_zone(assign, polys, radius):
    """Exclude training polygons whose centroid falls within ``radius`` of
    any validation-fold polygon centroid. Radius 0 turns the zone off."""
    if radius < 0:
        raise ConfigError("dead zone radius must be >= 0")
    excluded = [set() for _ in range(assign.k)]
    if radius > 0:
        ids = [p.id for p in polys]
        cents = np.array([p.centroid() for p in polys])
        folds = np.array([assign.polygon_fold[i] for i in ids])
        d2 = ((cents[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
        r2 = float(radius) ** 2
        for f in range(assign.k):
            val = folds == f
            if not val.any():
                continue
            near = (d2[:, val] <= r2).any(axis=1) & ~val
            excluded[f] = {ids[i] for i in np.nonzero(near)[0]}
    return FoldAssignment(assign.k, dict(assign.polygon_fold),
                          float(radius), excluded)


def pixel_folds(label_raster, assign):
    """Per labeled pixel of the raster: its polygon id and fold index."""
    idx = label_raster.polygon_idx
    labeled = idx >= 0
    fold_grid = np.full(idx.shape, -1, dtype=np.int16)
    for pi, pid in enumerate(label_raster.polygon_ids):
        if pid in assign.polygon_fold:
            fold_grid[idx == pi] = assign.polygon_fold[pid]
    if (labeled & (fold_grid < 0)).any():
        raise FoldError("labeled pixels trace to polygons without a fold")
    return fold_grid


def _row_folds(assign, label_raster, matrix):
    """(fold, polygon id) per feature-matrix row; fold -1 where unlabeled."""
    r, c = matrix.pixel_index[:, 0], matrix.pixel_index[:, 1]
    fold_grid = pixel_folds(label_raster, assign)
    row_fold = fold_grid[r, c].copy()
    row_fold[label_raster.values[r, c] == UNLABELED] = -1
    row_poly = np.array(
        [label_raster.polygon_ids[i] if i >= 0 else "" for i in
         label_raster.polygon_idx[r, c]], dtype=object)
    return row_fold, row_poly


def cv_splits_multi(assign, pairs):
    """Splits over the row-wise concatenation of several
    (label_raster, feature_matrix) pairs (one per tile)."""
    folds = []
    polys = []
    for label_raster, matrix in pairs:
        rf, rp = _row_folds(assign, label_raster, matrix)
        folds.append(rf)
        polys.append(rp)
    row_fold = np.concatenate(folds)
    row_poly = np.concatenate(polys)
    splits = []
    for f in range(assign.k):
        val = row_fold == f
        if not val.any():
            raise FoldError(f"fold {f} has no validation pixels; reseed or add data")
        train = (row_fold != f) & (row_fold >= 0)
        if assign.excluded[f]:
            train &= ~np.isin(row_poly, sorted(assign.excluded[f]))
        if not train.any():
            raise FoldError(f"fold {f} has no training pixels left")
        splits.append((np.nonzero(train)[0], np.nonzero(val)[0]))
    return splits


def cv_splits(assign, label_raster, matrix):
    """k (train_rows, validation_rows) index pairs into the feature matrix.

    Validation rows are the pixels of fold-f polygons; training rows are all
    other folds' pixels minus the fold's dead-zone exclusions. Rows whose
    pixel is unlabeled belong to no split.
    """
    return cv_splits_multi(assign, [(label_raster, matrix)])

"""Band-stack interchange format (BSTK), label polygons, and mask rasters.

BSTK layout, bit-exact:
  bytes 0-5    ASCII ``BSTK1\\n``
  bytes 6-9    unsigned 32-bit little-endian JSON header length L
  bytes 10..   UTF-8 JSON object with keys (in this order) width, height,
               bands, times, dtype ("u16"), nodata, transform (6 numbers),
               crs
  payload      T*B*H*W little-endian uint16, time-major, then band, then
               row-major pixels

The affine ``transform`` follows the common geotransform convention:
``x = t0 + col*t1 + row*t2`` and ``y = t3 + col*t4 + row*t5`` with pixel
centers at half-integer offsets.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConflictError,
    FormatError,
    GeometryError,
    InvariantError,
    IoError,
    SchemaError,
    TruncationError,
)

MAGIC = b"BSTK1\n"
VALID_BANDS = ("B02", "B03", "B04", "B08", "SCL", "NDVI", "MASK")
NODATA = 0
UNLABELED = 255
MASK_NODATA = 255  # in-memory mask sentinel; encodes to 128 in PGM payloads

_PGM_ENCODE = {0: 0, 1: 255, MASK_NODATA: 128}
_PGM_DECODE = {0: 0, 255: 1, 128: MASK_NODATA}


@dataclass(frozen=True)
class GeoRef:
    """Six-term affine pixel->map transform plus an opaque CRS identifier."""

    transform: tuple
    crs_id: str

    def __post_init__(self):
        t = tuple(float(v) for v in self.transform)
        if len(t) != 6:
            raise InvariantError("transform must have 6 terms")
        if t[1] == 0.0 or t[5] == 0.0:
            raise InvariantError("pixel width/height terms must be nonzero")
        if t[1] * t[5] - t[2] * t[4] == 0.0:
            raise InvariantError("transform is not invertible")
        object.__setattr__(self, "transform", t)

    def pixel_center(self, row, col):
        t = self.transform
        c = np.asarray(col, dtype=np.float64) + 0.5
        r = np.asarray(row, dtype=np.float64) + 0.5
        return t[0] + c * t[1] + r * t[2], t[3] + c * t[4] + r * t[5]

    def map_to_pixel(self, x, y):
        """Fractional (row, col) of a map coordinate (0.5 = first center)."""
        t = self.transform
        det = t[1] * t[5] - t[2] * t[4]
        dx = np.asarray(x, dtype=np.float64) - t[0]
        dy = np.asarray(y, dtype=np.float64) - t[3]
        col = (t[5] * dx - t[2] * dy) / det
        row = (t[1] * dy - t[4] * dx) / det
        return row, col


@dataclass
class BandStack:
    """T x B x H x W grid of uint16 digital numbers with 0 as nodata."""

    georef: GeoRef
    band_names: list
    time_axis: list
    pixels: np.ndarray
    nodata: int = NODATA

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in self.band_names:
            if name not in VALID_BANDS:
                raise SchemaError(f"unknown band name {name!r}")
        if len(set(self.band_names)) != len(self.band_names):
            raise InvariantError("band names must be unique")
        px = np.asarray(self.pixels)
        if px.ndim != 4 or px.dtype != np.uint16:
            raise InvariantError(
                f"pixels must be a 4-d uint16 array, got ndim={px.ndim} dtype={px.dtype}"
            )
        t, b = px.shape[:2]
        if t != len(self.time_axis) or b != len(self.band_names):
            raise InvariantError("pixel grid does not match time/band axes")
        for prev, cur in zip(self.time_axis, self.time_axis[1:]):
            if not cur > prev:
                raise InvariantError("time axis must be strictly increasing")
        if "SCL" in self.band_names:
            scl = px[:, self.band_names.index("SCL")]
            if scl.size and scl.max() > 11:
                raise SchemaError("SCL values must lie in 0..11")
        self.pixels = px

    @property
    def shape(self):
        return self.pixels.shape

    def band(self, name):
        return self.pixels[:, self.band_names.index(name)]


def _header_dict(stack):
    t, b, h, w = stack.pixels.shape
    return {
        "width": w,
        "height": h,
        "bands": list(stack.band_names),
        "times": list(stack.time_axis),
        "dtype": "u16",
        "nodata": int(stack.nodata),
        "transform": list(stack.georef.transform),
        "crs": stack.georef.crs_id,
    }


def write_bandstack(stack, path):
    """Serialize a stack to BSTK. Deterministic bytes for identical inputs."""
    stack.validate()
    header = json.dumps(_header_dict(stack), separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(stack.pixels, dtype="<u2").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _parse_header(fh, path):
    magic = fh.read(len(MAGIC))
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    (hlen,) = struct.unpack("<I", fh.read(4))
    raw = fh.read(hlen)
    if len(raw) != hlen:
        raise TruncationError(f"{path}: header shorter than declared")
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: invalid JSON header: {exc}") from exc
    for key in ("width", "height", "bands", "times", "dtype", "nodata", "transform", "crs"):
        if key not in header:
            raise FormatError(f"{path}: header missing {key!r}")
    if header["dtype"] != "u16":
        raise FormatError(f"{path}: unsupported dtype {header['dtype']!r}")
    return header, hlen


def read_bandstack(path):
    """Read a BSTK file fully into memory; round-trips write_bandstack bit-exactly."""
    with open(path, "rb") as fh:
        header, hlen = _parse_header(fh, path)
        w, h = header["width"], header["height"]
        t, b = len(header["times"]), len(header["bands"])
        expected = t * b * h * w * 2
        payload = fh.read()
    if len(payload) != expected:
        raise TruncationError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    pixels = (
        np.frombuffer(payload, dtype="<u2").reshape(t, b, h, w).astype(np.uint16)
    )
    georef = GeoRef(tuple(header["transform"]), header["crs"])
    return BandStack(georef, list(header["bands"]), list(header["times"]), pixels,
                     nodata=header["nodata"])


class BstkReader:
    """Windowed BSTK access via memmap, for strip-wise tile processing."""

    def __init__(self, path):
        self.path = path
        with open(path, "rb") as fh:
            header, hlen = self._check(fh, path)
        self.band_names = list(header["bands"])
        self.time_axis = list(header["times"])
        self.georef = GeoRef(tuple(header["transform"]), header["crs"])
        self.nodata = header["nodata"]
        self.shape = (len(self.time_axis), len(self.band_names),
                      header["height"], header["width"])
        self._mm = np.memmap(path, dtype="<u2", mode="r",
                             offset=len(MAGIC) + 4 + hlen, shape=self.shape)

    def _check(self, fh, path):
        header, hlen = _parse_header(fh, path)
        import os

        expected = (len(header["times"]) * len(header["bands"])
                    * header["height"] * header["width"] * 2)
        actual = os.fstat(fh.fileno()).st_size - len(MAGIC) - 4 - hlen
        if actual != expected:
            raise TruncationError(
                f"{path}: payload is {actual} bytes, header implies {expected}")
        return header, hlen

    def read_rows(self, row0, row1):
        """Copy of rows [row0, row1) across all times and bands."""
        return np.array(self._mm[:, :, row0:row1, :], dtype=np.uint16)


# ---------------------------------------------------------------------------
# Label polygons


@dataclass
class LabeledPolygon:
    """Class-annotated polygon or multipolygon in map coordinates.

    ``rings`` is normalized to multipolygon structure: a list of parts, each
    part a list of closed rings (first ring exterior, the rest holes), each
    ring a list of (x, y) vertices whose last vertex repeats the first.
    """

    id: str
    rings: list
    cls: int

    def __post_init__(self):
        if self.cls not in (0, 1):
            raise SchemaError(f"polygon {self.id!r}: class must be 0 or 1")
        for part in self.rings:
            for ring in part:
                if len(ring) < 4:
                    raise GeometryError(
                        f"polygon {self.id!r}: ring needs at least 3 distinct vertices")
                if tuple(ring[0]) != tuple(ring[-1]):
                    raise GeometryError(f"polygon {self.id!r}: ring not closed")

    def centroid(self):
        """Area-weighted centroid; holes (rings after the first of each part)
        subtract. Falls back to the vertex mean for zero-area geometry."""
        area_sum = 0.0
        cx = 0.0
        cy = 0.0
        for part in self.rings:
            for ri, ring in enumerate(part):
                a, x, y = _ring_centroid(ring)
                sign = 1.0 if ri == 0 else -1.0
                area_sum += sign * a
                cx += sign * a * x
                cy += sign * a * y
        if area_sum == 0.0:
            pts = np.array([v for part in self.rings for ring in part for v in ring[:-1]])
            return float(pts[:, 0].mean()), float(pts[:, 1].mean())
        return cx / area_sum, cy / area_sum

    def bounds(self):
        pts = np.array([v for part in self.rings for ring in part for v in ring])
        return (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())


def _ring_centroid(ring):
    """(|area|, cx, cy) of one closed ring via the shoelace formula."""
    v = np.asarray(ring, dtype=np.float64)
    x, y = v[:-1, 0], v[:-1, 1]
    xn, yn = v[1:, 0], v[1:, 1]
    cross = x * yn - xn * y
    a2 = cross.sum()
    if a2 == 0.0:
        return 0.0, x.mean(), y.mean()
    cx = ((x + xn) * cross).sum() / (3.0 * a2)
    cy = ((y + yn) * cross).sum() / (3.0 * a2)
    return abs(a2) / 2.0, cx, cy


def parse_label_polygons(text):
    """Parse the GeoJSON-subset label file into LabeledPolygon objects.

    Each feature must be a Polygon or MultiPolygon with properties
    ``{"id": str, "class": 0|1}``. Feature order is preserved.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"label file is not valid JSON: {exc}") from exc
    if doc.get("type") != "FeatureCollection" or "features" not in doc:
        raise SchemaError("label file must be a GeoJSON FeatureCollection")
    polys = []
    for i, feat in enumerate(doc["features"]):
        props = feat.get("properties") or {}
        if "class" not in props:
            raise SchemaError(f"feature {i}: missing 'class' property")
        cls = props["class"]
        if cls not in (0, 1):
            raise SchemaError(f"feature {i}: class must be 0 or 1, got {cls!r}")
        if "id" not in props:
            raise SchemaError(f"feature {i}: missing 'id' property")
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            parts = [coords]
        elif gtype == "MultiPolygon":
            parts = coords
        else:
            raise SchemaError(f"feature {i}: geometry must be Polygon or MultiPolygon")
        rings = [[[tuple(map(float, v)) for v in ring] for ring in part] for part in parts]
        polys.append(LabeledPolygon(str(props["id"]), rings, cls))
    return polys


@dataclass
class LabelRaster:
    """Per-pixel class grid plus the polygon index each labeled pixel came from."""

    georef: GeoRef
    values: np.ndarray       # (H, W) uint8 over {0, 1, UNLABELED}
    polygon_idx: np.ndarray  # (H, W) int32 index into polygon_ids, -1 unlabeled
    polygon_ids: list = field(default_factory=list)

    def class_counts(self):
        return {c: int((self.values == c).sum()) for c in (0, 1)}

    def labeled_mask(self):
        return self.values != UNLABELED


def _edges_of(poly):
    """All ring edges of a polygon stacked as (x1, y1, x2, y2) arrays."""
    segs = []
    for part in poly.rings:
        for ring in part:
            v = np.asarray(ring, dtype=np.float64)
            segs.append(np.column_stack([v[:-1, 0], v[:-1, 1], v[1:, 0], v[1:, 1]]))
    return np.concatenate(segs, axis=0)


def polygon_cover_mask(poly, georef, shape):
    """Boolean H x W grid: pixel centers inside the polygon, even-odd rule.

    The crossing test per edge is ``(y1 > yc) != (y2 > yc)`` and
    ``xc < x1 + (yc - y1) * (x2 - x1) / (y2 - y1)``; the parity of crossings
    over every ring of every part decides membership, so holes subtract.
    """
    h, w = shape
    xmin, ymin, xmax, ymax = poly.bounds()
    corners_r, corners_c = georef.map_to_pixel(
        np.array([xmin, xmin, xmax, xmax]), np.array([ymin, ymax, ymin, ymax]))
    r0 = max(0, int(np.floor(corners_r.min())) - 1)
    r1 = min(h, int(np.ceil(corners_r.max())) + 1)
    c0 = max(0, int(np.floor(corners_c.min())) - 1)
    c1 = min(w, int(np.ceil(corners_c.max())) + 1)
    mask = np.zeros((h, w), dtype=bool)
    if r0 >= r1 or c0 >= c1:
        return mask
    rows = np.arange(r0, r1)
    cols = np.arange(c0, c1)
    xc, yc = georef.pixel_center(rows[:, None], cols[None, :])
    parity = np.zeros((r1 - r0, c1 - c0), dtype=np.int64)
    for x1, y1, x2, y2 in _edges_of(poly):
        if y1 == y2:
            continue
        straddles = (y1 > yc) != (y2 > yc)
        xi = x1 + (yc - y1) * (x2 - x1) / (y2 - y1)
        parity += (straddles & (xc < xi)).astype(np.int64)
    mask[r0:r1, c0:c1] = (parity % 2) == 1
    return mask


def rasterize_labels(polys, georef, shape):
    """Label each pixel whose center falls inside a polygon.

    Overlaps of equal class keep the first polygon; overlaps of different
    classes raise ConflictError naming the pixel and both polygons.
    """
    h, w = shape
    values = np.full((h, w), UNLABELED, dtype=np.uint8)
    polygon_idx = np.full((h, w), -1, dtype=np.int32)
    ids = []
    for idx, poly in enumerate(polys):
        ids.append(poly.id)
        cover = polygon_cover_mask(poly, georef, (h, w))
        clash = cover & (values != UNLABELED) & (values != poly.cls)
        if clash.any():
            r, c = np.argwhere(clash)[0]
            other = ids[polygon_idx[r, c]]
            raise ConflictError(
                f"pixel ({r}, {c}) claimed by polygons {other!r} and {poly.id!r} "
                f"of different classes")
        new = cover & (values == UNLABELED)
        values[new] = poly.cls
        polygon_idx[new] = idx
    return LabelRaster(georef, values, polygon_idx, ids)


# ---------------------------------------------------------------------------
# Mask rasters


def _sidecar_path(path):
    path = str(path)
    base = path[: -len(".pgm")] if path.endswith(".pgm") else path
    return base + ".georef.json"


def write_mask(mask, georef, path):
    """Write a {0, 1, NODATA} mask as binary PGM plus a georef JSON sidecar."""
    mask = np.asarray(mask, dtype=np.uint8)
    if mask.ndim != 2:
        raise InvariantError("mask must be 2-d")
    bad = ~np.isin(mask, list(_PGM_ENCODE))
    if bad.any():
        raise InvariantError("mask values must be 0, 1, or NODATA")
    out = np.zeros_like(mask)
    out[mask == 1] = 255
    out[mask == MASK_NODATA] = 128
    h, w = mask.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(out.tobytes())
        with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump({"transform": list(georef.transform), "crs": georef.crs_id},
                      fh, separators=(",", ":"))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_mask(path):
    """Inverse of write_mask; returns (mask, georef)."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    if parts[2] != b"255":
        raise FormatError(f"{path}: maxval must be 255")
    raw = np.frombuffer(parts[3][: h * w], dtype=np.uint8).reshape(h, w)
    if raw.size != h * w:
        raise TruncationError(f"{path}: payload shorter than {w}x{h}")
    mask = np.full((h, w), MASK_NODATA, dtype=np.uint8)
    for enc, val in _PGM_DECODE.items():
        mask[raw == enc] = val
    with open(_sidecar_path(path), encoding="utf-8") as fh:
        side = json.load(fh)
    return mask, GeoRef(tuple(side["transform"]), side["crs"])


def mask_to_bandstack(mask, georef):
    """Mask as a single MASK-band stack; values shift by +1 so that the
    BSTK nodata sentinel 0 encodes NODATA."""
    mask = np.asarray(mask, dtype=np.uint8)
    px = np.zeros((1, 1) + mask.shape, dtype=np.uint16)
    px[0, 0][mask == 0] = 1
    px[0, 0][mask == 1] = 2
    return BandStack(georef, ["MASK"], [0], px)


def bandstack_to_mask(stack):
    plane = stack.band("MASK")[0]
    mask = np.full(plane.shape, MASK_NODATA, dtype=np.uint8)
    mask[plane == 1] = 0
    mask[plane == 2] = 1
    return mask

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cropmask.errors import (ConflictError, FormatError, GeometryError,
                             InvariantError, SchemaError, TruncationError)
from cropmask.raster import (MASK_NODATA, UNLABELED, BandStack, BstkReader,
                             GeoRef, LabeledPolygon, bandstack_to_mask,
                             mask_to_bandstack, parse_label_polygons,
                             polygon_cover_mask, rasterize_labels,
                             read_bandstack, read_mask, write_bandstack,
                             write_mask)


def test_georef_requires_invertible_transform():
    with pytest.raises(InvariantError):
        GeoRef((0, 0, 0, 0, 0, -10), "x")
    with pytest.raises(InvariantError):
        GeoRef((0, 1, 1, 0, 1, 1), "x")  # zero determinant


def test_georef_roundtrip(georef):
    x, y = georef.pixel_center(3, 7)
    row, col = georef.map_to_pixel(x, y)
    assert row == pytest.approx(3.5) and col == pytest.approx(7.5)


def test_minimal_bandstack_roundtrip(tmp_path, georef):
    stack = BandStack(georef, ["B02"], [0],
                      np.array([[[[5000]]]], dtype=np.uint16))
    path = tmp_path / "one.bstk"
    write_bandstack(stack, path)
    back = read_bandstack(path)
    assert back.pixels[0, 0, 0, 0] == 5000
    assert back.band_names == ["B02"] and back.time_axis == [0]


def test_roundtrip_and_determinism(tmp_path, small_stack):
    p1, p2 = tmp_path / "a.bstk", tmp_path / "b.bstk"
    write_bandstack(small_stack, p1)
    write_bandstack(small_stack, p2)
    assert p1.read_bytes() == p2.read_bytes()
    back = read_bandstack(p1)
    assert np.array_equal(back.pixels, small_stack.pixels)
    assert back.georef.transform == small_stack.georef.transform
    assert back.time_axis == small_stack.time_axis
    # byte-for-byte payload on rewrite
    write_bandstack(back, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_is_format_error(tmp_path):
    path = tmp_path / "bad.bstk"
    path.write_bytes(b"NOTBS\n" + b"\x00" * 32)
    with pytest.raises(FormatError):
        read_bandstack(path)


def test_truncated_payload(tmp_path, small_stack):
    path = tmp_path / "trunc.bstk"
    write_bandstack(small_stack, path)
    data = path.read_bytes()
    path.write_bytes(data[:-4])
    with pytest.raises(TruncationError):
        read_bandstack(path)


def test_header_declaring_more_than_payload(tmp_path, georef):
    path = tmp_path / "short.bstk"
    header = json.dumps({"width": 10, "height": 10, "bands": ["B02"],
                         "times": [0], "dtype": "u16", "nodata": 0,
                         "transform": list(georef.transform),
                         "crs": "x"}).encode()
    import struct

    path.write_bytes(b"BSTK1\n" + struct.pack("<I", len(header)) + header + b"\x00\x00")
    with pytest.raises(TruncationError):
        read_bandstack(path)


def test_unknown_band_name_rejected(georef):
    with pytest.raises(SchemaError):
        BandStack(georef, ["B99"], [0], np.zeros((1, 1, 1, 1), dtype=np.uint16))


def test_mismatched_plane_shape_is_invariant_error(georef):
    with pytest.raises(InvariantError):
        BandStack(georef, ["B02", "B04"], [0],
                  np.zeros((1, 1, 2, 2), dtype=np.uint16))


def test_windowed_reader_matches_full_read(tmp_path, small_stack):
    path = tmp_path / "win.bstk"
    write_bandstack(small_stack, path)
    reader = BstkReader(path)
    assert reader.shape == small_stack.pixels.shape
    rows = reader.read_rows(1, 3)
    assert np.array_equal(rows, small_stack.pixels[:, :, 1:3, :])


# ---------------------------------------------------------------------------
# Label polygons


def square(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]


def feature(pid, cls, rings, gtype="Polygon"):
    return {"type": "Feature", "properties": {"id": pid, "class": cls},
            "geometry": {"type": gtype, "coordinates": rings}}


def collection(*features):
    return json.dumps({"type": "FeatureCollection", "features": list(features)})


def test_parse_single_polygon():
    polys = parse_label_polygons(collection(feature("a", 1, [square(0, 0, 30, 30)])))
    assert len(polys) == 1
    assert polys[0].cls == 1 and polys[0].id == "a"
    assert len(polys[0].rings) == 1


def test_parse_multipolygon_kept_as_one_label_unit():
    geom = [[square(0, 0, 10, 10)], [square(20, 20, 30, 30)]]
    polys = parse_label_polygons(collection(feature("m", 0, geom, "MultiPolygon")))
    assert len(polys) == 1
    assert len(polys[0].rings) == 2


def test_parse_missing_class_is_schema_error():
    feat = feature("a", 1, [square(0, 0, 1, 1)])
    del feat["properties"]["class"]
    with pytest.raises(SchemaError):
        parse_label_polygons(collection(feat))


def test_parse_bad_class_value():
    with pytest.raises(SchemaError):
        parse_label_polygons(collection(feature("a", 2, [square(0, 0, 1, 1)])))


def test_unclosed_ring_is_geometry_error():
    ring = [[0, 0], [1, 0], [1, 1], [0, 1]]
    with pytest.raises(GeometryError):
        parse_label_polygons(collection(feature("a", 1, [ring])))


def test_centroid_of_square():
    poly = LabeledPolygon("s", [[square(0, 0, 10, 10)]], 1)
    assert poly.centroid() == pytest.approx((5.0, 5.0))


def test_centroid_with_hole():
    outer = square(0, 0, 10, 10)
    hole = square(0, 0, 5, 10)  # removes the left half
    poly = LabeledPolygon("h", [[outer, hole]], 1)
    cx, cy = poly.centroid()
    assert cx == pytest.approx(7.5) and cy == pytest.approx(5.0)


# ---------------------------------------------------------------------------
# Rasterization


def test_square_covering_3x3_centers(georef):
    # pixel centers at x = 5, 15, 25, ... ; y = 995, 985, ...
    poly = LabeledPolygon("a", [[square(0, 970, 30, 1000)]], 1)
    raster = rasterize_labels([poly], georef, (6, 6))
    assert raster.class_counts() == {0: 0, 1: 9}
    assert (raster.values[:3, :3] == 1).all()
    assert (raster.values[3:, :] == UNLABELED).all()
    assert (raster.polygon_idx[:3, :3] == 0).all()


def test_polygon_outside_extent(georef):
    poly = LabeledPolygon("a", [[square(-500, -500, -400, -400)]], 1)
    raster = rasterize_labels([poly], georef, (6, 6))
    assert raster.class_counts() == {0: 0, 1: 0}


def test_conflicting_overlap_raises(georef):
    a = LabeledPolygon("a", [[square(0, 970, 30, 1000)]], 1)
    b = LabeledPolygon("b", [[square(0, 970, 30, 1000)]], 0)
    with pytest.raises(ConflictError) as err:
        rasterize_labels([a, b], georef, (6, 6))
    assert "a" in str(err.value) and "b" in str(err.value)


def test_same_class_overlap_keeps_first(georef):
    a = LabeledPolygon("a", [[square(0, 970, 30, 1000)]], 1)
    b = LabeledPolygon("b", [[square(0, 970, 30, 1000)]], 1)
    raster = rasterize_labels([a, b], georef, (6, 6))
    assert (raster.polygon_idx[raster.values == 1] == 0).all()


def _oracle_point_in_polygon(poly, x, y):
    """Independent scalar even-odd crossing test."""
    inside = False
    for part in poly.rings:
        for ring in part:
            for (x1, y1), (x2, y2) in zip(ring[:-1], ring[1:]):
                if y1 == y2:
                    continue
                if (y1 > y) != (y2 > y) and x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
                    inside = not inside
    return inside


def test_rasterize_matches_point_in_polygon_oracle(georef):
    rng = np.random.default_rng(3)
    for trial in range(20):
        n_vertices = int(rng.integers(3, 9))
        angles = np.sort(rng.uniform(0, 2 * np.pi, n_vertices))
        radius = rng.uniform(15, 60, n_vertices)
        cx, cy = rng.uniform(0, 80), rng.uniform(920, 1000)
        ring = [[cx + r * np.cos(a), cy + r * np.sin(a)]
                for r, a in zip(radius, angles)]
        ring.append(ring[0])
        poly = LabeledPolygon(f"p{trial}", [[ring]], 1)
        cover = polygon_cover_mask(poly, georef, (10, 10))
        for row in range(10):
            for col in range(10):
                x, y = georef.pixel_center(row, col)
                assert cover[row, col] == _oracle_point_in_polygon(poly, x, y)


def test_rasterize_deterministic(georef):
    rng = np.random.default_rng(5)
    polys = []
    for i in range(5):
        x0, y0 = rng.uniform(0, 40), rng.uniform(940, 980)
        polys.append(LabeledPolygon(
            f"p{i}", [[square(x0, y0, x0 + 15, y0 + 15)]], int(i % 2)))
    grids = [rasterize_labels(polys, georef, (10, 10)) for _ in range(2)]
    assert np.array_equal(grids[0].values, grids[1].values)
    assert np.array_equal(grids[0].polygon_idx, grids[1].polygon_idx)


def test_class_counts_sum_to_labeled_total(georef):
    a = LabeledPolygon("a", [[square(0, 970, 30, 1000)]], 1)
    b = LabeledPolygon("b", [[square(30, 970, 60, 1000)]], 0)
    raster = rasterize_labels([a, b], georef, (6, 6))
    counts = raster.class_counts()
    assert all(v >= 0 for v in counts.values())
    assert counts[0] + counts[1] == int(raster.labeled_mask().sum())


# ---------------------------------------------------------------------------
# Masks


def test_mask_pgm_payloads(tmp_path, georef):
    path = tmp_path / "m.pgm"
    write_mask(np.ones((2, 2), dtype=np.uint8), georef, path)
    data = path.read_bytes()
    assert data.startswith(b"P5\n2 2\n255\n")
    assert data[-4:] == b"\xff\xff\xff\xff"
    write_mask(np.full((2, 2), MASK_NODATA, dtype=np.uint8), georef, path)
    assert path.read_bytes()[-4:] == b"\x80\x80\x80\x80"


def test_mask_roundtrips(tmp_path, georef):
    mask = np.array([[0, 1], [MASK_NODATA, 1]], dtype=np.uint8)
    path = tmp_path / "m.pgm"
    write_mask(mask, georef, path)
    back, gr = read_mask(path)
    assert np.array_equal(back, mask)
    assert gr.transform == georef.transform
    # round-trip through the single-band stack form
    assert np.array_equal(bandstack_to_mask(mask_to_bandstack(mask, georef)), mask)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(2, 5), st.integers(2, 5),
       st.integers(0, 2 ** 32 - 1))
def test_bstk_roundtrip_property(tmp_path_factory, t, b, h, w, seed):
    rng = np.random.default_rng(seed)
    bands = ["B02", "B03", "B04"][:b]
    stack = BandStack(GeoRef((0, 10, 0, 0, 0, -10), "EPSG:1"), bands,
                      list(range(t)),
                      rng.integers(0, 65536, size=(t, b, h, w), dtype=np.uint16))
    path = tmp_path_factory.mktemp("rt") / "s.bstk"
    write_bandstack(stack, path)
    back = read_bandstack(path)
    assert np.array_equal(back.pixels, stack.pixels)

import numpy as np
import pytest

from cropmask.raster import BandStack, GeoRef


@pytest.fixture
def georef():
    return GeoRef((0.0, 10.0, 0.0, 1000.0, 0.0, -10.0), "EPSG:32643")


@pytest.fixture
def small_stack(georef):
    rng = np.random.default_rng(42)
    pixels = rng.integers(1, 10000, size=(3, 2, 4, 5), dtype=np.uint16)
    return BandStack(georef, ["B04", "B08"], [0, 1, 2], pixels)

import numpy
import pytest

from src.core.errors import DomainError
from src.forward.phantom import FONT, glyphBitmap, makeLetterPhantom


def test_blank_glyph_is_uniform_background() -> None:
    phantom = makeLetterPhantom(16, 16, " ", rho0=0.3, rho1=0.1)
    assert numpy.all(phantom.reflectance.values == 0.3)
    assert not numpy.any(phantom.labels)


def test_label_count_matches_the_scaled_bitmap() -> None:
    phantom = makeLetterPhantom(64, 64, "M", rho0=0.3, rho1=0.1, scale=4)
    bitmap = glyphBitmap("M")

    assert int(phantom.labels.sum()) == int(bitmap.sum()) * 16


def test_values_are_the_two_class_means() -> None:
    phantom = makeLetterPhantom(64, 64, "M", rho0=0.3, rho1=0.1)

    assert set(numpy.unique(phantom.reflectance.values)) == {0.1, 0.3}
    assert numpy.array_equal(
        phantom.reflectance.values == 0.1, phantom.labels == 1
    )


def test_default_scale_centers_the_glyph() -> None:
    phantom = makeLetterPhantom(32, 20, "I", rho0=0.3, rho1=0.1)
    image = phantom.labels.reshape(20, 32)

    rows = numpy.flatnonzero(image.any(axis=1))
    assert rows[0] + rows[-1] in (19, 18, 20)
    assert rows[-1] - rows[0] + 1 <= 0.8 * 20


def test_unsupported_glyph_lists_the_supported_set() -> None:
    with pytest.raises(DomainError) as error:
        makeLetterPhantom(32, 32, "@", rho0=0.3, rho1=0.1)
    assert "'@'" in str(error.value)
    assert "ABC" in str(error.value)


def test_glyph_too_large_for_the_raster() -> None:
    with pytest.raises(DomainError):
        makeLetterPhantom(8, 8, "MM", rho0=0.3, rho1=0.1, scale=2)


def test_font_glyphs_are_five_by_seven() -> None:
    for rows in FONT.values():
        assert len(rows) == 7
        assert all(len(row) == 5 for row in rows)

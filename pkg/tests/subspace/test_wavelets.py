import numpy
import pytest
from numpy import ndarray

from src.core.errors import ContractError, DomainError
from src.core.imageGrid import ImageGrid
from src.subspace.wavelets import (
    WaveletBank,
    coefficientIndex,
    dwt2Forward,
    dwt2Inverse,
    layoutFor,
    resolveLevels,
    scalingIndices,
    synthesisColumns,
)

BANK: WaveletBank = WaveletBank()


def randomImage(rng, width: int = 64, height: int = 64) -> ImageGrid:
    return ImageGrid(
        width=width, height=height, values=rng.standard_normal(width * height)
    )


def test_filters_are_orthogonal() -> None:
    for taps in (BANK.lowpass, BANK.highpass):
        assert abs(numpy.dot(taps, taps) - 1.0) <= 1e-12
        for shift in range(2, taps.size, 2):
            assert abs(numpy.dot(taps[:-shift], taps[shift:])) <= 1e-12


def test_unknown_or_biorthogonal_families_are_rejected() -> None:
    with pytest.raises(DomainError):
        WaveletBank(family="nope")
    with pytest.raises(DomainError):
        WaveletBank(family="bior2.2")
    with pytest.raises(DomainError):
        WaveletBank(levels=-1)


def test_automatic_depth_keeps_a_four_pixel_coarse_band() -> None:
    assert resolveLevels(BANK, 64, 64) == 3
    assert resolveLevels(BANK, 16, 16) == 1
    assert resolveLevels(WaveletBank(family="haar"), 64, 64) == 4
    assert resolveLevels(WaveletBank(levels=2), 64, 64) == 2


def test_parseval(rng) -> None:
    image: ImageGrid = randomImage(rng)
    coeffs: ndarray = dwt2Forward(image, BANK)

    assert coeffs.size == image.size
    assert numpy.linalg.norm(coeffs) / numpy.linalg.norm(
        image.values
    ) == pytest.approx(1.0, abs=1e-10)


def test_perfect_reconstruction(rng) -> None:
    for _ in range(100):
        image: ImageGrid = randomImage(rng, 32, 16)
        restored: ImageGrid = dwt2Inverse(
            dwt2Forward(image, BANK), BANK, 32, 16
        )
        error: float = numpy.linalg.norm(restored.values - image.values)
        assert error <= 1e-10 * numpy.linalg.norm(image.values)


def test_forward_inverts_the_inverse(rng) -> None:
    coeffs: ndarray = rng.standard_normal(64 * 64)
    image: ImageGrid = dwt2Inverse(coeffs, BANK, 64, 64)
    assert numpy.allclose(dwt2Forward(image, BANK), coeffs, atol=1e-10)


def test_constant_image_has_no_detail() -> None:
    image = ImageGrid(width=64, height=64, values=numpy.full(4096, 0.7))
    coeffs: ndarray = dwt2Forward(image, BANK)

    detail: ndarray = numpy.ones(coeffs.size, dtype=bool)
    detail[scalingIndices(BANK, 64, 64)] = False

    assert numpy.max(numpy.abs(coeffs[detail])) <= 1e-10
    assert numpy.sum(coeffs[~detail] ** 2) == pytest.approx(
        numpy.sum(image.values**2)
    )


def test_delta_image_round_trip() -> None:
    values: ndarray = numpy.zeros(64 * 64)
    values[1234] = 1.0
    image = ImageGrid(width=64, height=64, values=values)

    restored = dwt2Inverse(dwt2Forward(image, BANK), BANK, 64, 64)
    assert numpy.allclose(restored.values, values, atol=1e-12)


def test_zero_coefficients_give_a_zero_image() -> None:
    image: ImageGrid = dwt2Inverse(numpy.zeros(256), BANK, 16, 16)
    assert not numpy.any(image.values)


def test_single_scaling_function_has_unit_norm() -> None:
    column: ndarray = synthesisColumns(numpy.array([0]), BANK, 64, 64)
    assert numpy.linalg.norm(column) == pytest.approx(1.0, abs=1e-12)


def test_padded_grids_round_trip(rng) -> None:
    bank = WaveletBank(levels=2)
    image: ImageGrid = randomImage(rng, width=22, height=30)

    assert layoutFor(bank, 30, 22).paddedShape == (32, 24)
    coeffs: ndarray = dwt2Forward(image, bank)
    assert coeffs.size == 32 * 24

    restored: ImageGrid = dwt2Inverse(coeffs, bank, 22, 30)
    assert numpy.allclose(restored.values, image.values, atol=1e-10)


def test_coefficient_count_is_checked() -> None:
    with pytest.raises(ContractError):
        dwt2Inverse(numpy.zeros(10), BANK, 16, 16)


def test_coefficient_provenance() -> None:
    levels: int = resolveLevels(BANK, 64, 64)

    assert coefficientIndex(BANK, 64, 64, 0) == (levels, "scaling", (0, 0))
    assert coefficientIndex(BANK, 64, 64, 65) == (levels, "scaling", (1, 1))

    scale, orientation, _ = coefficientIndex(BANK, 64, 64, 64 * 64 - 1)
    assert (scale, orientation) == (1, "diagonal")

    with pytest.raises(DomainError):
        coefficientIndex(BANK, 64, 64, 64 * 64)


def test_scaling_band_size() -> None:
    assert scalingIndices(BANK, 64, 64).size == 64
    assert scalingIndices(BANK, 16, 16).size == 64


def test_every_band_has_explicit_bounds() -> None:
    for width, height in ((64, 64), (16, 16), (24, 40)):
        layout = layoutFor(BANK, height, width)
        bands = [layout.slices[0]] + [
            spec for details in layout.slices[1:] for spec in details.values()
        ]
        for rows, cols in bands:
            assert isinstance(rows.start, int) and isinstance(cols.start, int)

    assert list(scalingIndices(BANK, 64, 64)[:3]) == [0, 1, 2]
    assert coefficientIndex(BANK, 64, 64, 8)[1] == "horizontal"

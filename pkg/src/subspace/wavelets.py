import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, NamedTuple, Tuple, Union

import numpy
import pywt
from numpy import ndarray

from src.core.errors import ContractError, DomainError
from src.core.imageGrid import ImageGrid

logger: logging.Logger = logging.getLogger(__name__)

ORIGIN: str = "subspace.wavelets"

BOUNDARY: str = "periodization"
ORTHOGONALITY_TOLERANCE: float = 1e-12
MIN_COARSE_SIZE: int = 4

# pywt detail keys -> orientation names
ORIENTATIONS: Dict[str, str] = {
    "ad": "horizontal",
    "da": "vertical",
    "dd": "diagonal",
}

SliceSpec = Union[Tuple[slice, slice], Dict[str, Tuple[slice, slice]]]


def _checkOrthogonal(taps: ndarray, name: str, family: str) -> None:
    energy: float = float(numpy.dot(taps, taps))
    if abs(energy - 1.0) > ORTHOGONALITY_TOLERANCE:
        raise DomainError(
            ORIGIN,
            f"{family} {name} taps have energy {energy!r}, expected 1",
            "family",
        )

    shift: int
    for shift in range(2, taps.size, 2):
        overlap: float = float(numpy.dot(taps[:-shift], taps[shift:]))
        if abs(overlap) > ORTHOGONALITY_TOLERANCE:
            raise DomainError(
                ORIGIN,
                f"{family} {name} taps are not orthogonal to their "
                f"{shift}-shift ({overlap!r})",
                "family",
            )


@dataclass(frozen=True)
class WaveletBank:
    """
    Orthogonal two-channel analysis filter bank used for the separable 2D
    transform.

    Filters come from PyWavelets and are checked on construction: unit
    energy and orthogonality to every even shift, for both channels.

    :param family: PyWavelets name of an orthogonal family, ``sym4`` by
        default.
    :type family: str
    :param levels: Decomposition depth; 0 picks the deepest level whose
        coarsest band is at least 4x4 and that the filter length supports.
    :type levels: int
    """

    family: str = "sym4"
    levels: int = 0
    boundary: str = BOUNDARY

    def __post_init__(self) -> None:
        try:
            wavelet: pywt.Wavelet = pywt.Wavelet(self.family)
        except ValueError:
            raise DomainError(
                ORIGIN, f"unknown wavelet family {self.family!r}", "family"
            )

        if not wavelet.orthogonal:
            raise DomainError(
                ORIGIN, f"{self.family} is not orthogonal", "family"
            )
        if self.levels < 0:
            raise DomainError(ORIGIN, "must be >= 0", "levels")
        if self.boundary != BOUNDARY:
            raise DomainError(
                ORIGIN, f"only {BOUNDARY!r} boundaries keep orthonormality",
                "boundary",
            )

        _checkOrthogonal(self.lowpass, "lowpass", self.family)
        _checkOrthogonal(self.highpass, "highpass", self.family)

    @property
    def wavelet(self) -> pywt.Wavelet:
        return pywt.Wavelet(self.family)

    @property
    def lowpass(self) -> ndarray:
        return numpy.asarray(self.wavelet.dec_lo, dtype=numpy.float64)

    @property
    def highpass(self) -> ndarray:
        return numpy.asarray(self.wavelet.dec_hi, dtype=numpy.float64)


class Layout(NamedTuple):
    levels: int
    paddedShape: Tuple[int, int]
    pads: Tuple[int, int]
    slices: Tuple[SliceSpec, ...]


def resolveLevels(bank: WaveletBank, height: int, width: int) -> int:
    if bank.levels:
        return bank.levels

    size: int = min(height, width)
    deepest: int = pywt.dwt_max_level(size, bank.wavelet.dec_len)

    levels: int = 0
    while levels < deepest and size // 2 >= MIN_COARSE_SIZE:
        size //= 2
        levels += 1

    return max(levels, 1)


def _bounded(spec: Tuple[slice, slice]) -> Tuple[slice, slice]:
    # pywt leaves the start of leading bands as None
    return tuple(slice(s.start or 0, s.stop) for s in spec)


@lru_cache(maxsize=64)
def _layout(family: str, levels: int, height: int, width: int) -> Layout:
    block: int = 2**levels
    paddedHeight: int = -(-height // block) * block
    paddedWidth: int = -(-width // block) * block

    coeffs: List = pywt.wavedec2(
        numpy.zeros((paddedHeight, paddedWidth)),
        family,
        mode=BOUNDARY,
        level=levels,
    )
    raw: List[SliceSpec]
    _, raw = pywt.coeffs_to_array(coeffs)
    slices: List[SliceSpec] = [_bounded(raw[0])] + [
        {key: _bounded(spec) for key, spec in details.items()}
        for details in raw[1:]
    ]

    return Layout(
        levels=levels,
        paddedShape=(paddedHeight, paddedWidth),
        pads=((paddedHeight - height) // 2, (paddedWidth - width) // 2),
        slices=tuple(slices),
    )


def layoutFor(bank: WaveletBank, height: int, width: int) -> Layout:
    """
    Coefficient layout of the transform for a ``height x width`` image.

    Sizes that are not multiples of ``2^levels`` are zero-padded
    symmetrically (extra row/column at the end) up to the next multiple.
    """
    return _layout(
        bank.family, resolveLevels(bank, height, width), height, width
    )


def dwt2Forward(image: ImageGrid, bank: WaveletBank) -> ndarray:
    """
    Separable multilevel 2D wavelet analysis.

    :param image: Input image.
    :type image: ImageGrid
    :param bank: Filter bank.
    :type bank: WaveletBank
    :return: Flat coefficient vector in canonical (row-major
        ``coeffs_to_array``) order; length ``P`` unless padding was needed.
    :rtype: ndarray
    """
    layout: Layout = layoutFor(bank, image.height, image.width)

    padded: ndarray = numpy.zeros(layout.paddedShape)
    top: int
    left: int
    top, left = layout.pads
    padded[top : top + image.height, left : left + image.width] = (
        image.asImage()
    )

    coeffs: List = pywt.wavedec2(
        padded, bank.family, mode=bank.boundary, level=layout.levels
    )
    return pywt.coeffs_to_array(coeffs)[0].ravel()


def dwt2Inverse(
    coeffs: ndarray,
    bank: WaveletBank,
    width: int,
    height: int,
    pixelPitchX: float = 1e-4,
    pixelPitchY: float = 1e-4,
) -> ImageGrid:
    """
    Inverse of :func:`dwt2Forward`, cropping any padding.

    :param coeffs: Coefficient vector in canonical order.
    :type coeffs: ndarray
    :return: Reconstructed image.
    :rtype: ImageGrid
    """
    return ImageGrid(
        width=width,
        height=height,
        values=_synthesize(coeffs, bank, width, height),
        pixelPitchX=pixelPitchX,
        pixelPitchY=pixelPitchY,
    )


def _synthesize(
    coeffs: ndarray, bank: WaveletBank, width: int, height: int
) -> ndarray:
    layout: Layout = layoutFor(bank, height, width)
    expected: int = layout.paddedShape[0] * layout.paddedShape[1]
    coeffs = numpy.asarray(coeffs, dtype=numpy.float64)
    if coeffs.size != expected:
        raise ContractError(
            ORIGIN, f"expected {expected} coefficients, got {coeffs.size}"
        )

    structured: List = pywt.array_to_coeffs(
        coeffs.reshape(layout.paddedShape),
        list(layout.slices),
        output_format="wavedec2",
    )
    padded: ndarray = pywt.waverec2(
        structured, bank.family, mode=bank.boundary
    )

    top: int
    left: int
    top, left = layout.pads
    return padded[top : top + height, left : left + width].ravel()


def synthesisColumns(
    indices: ndarray, bank: WaveletBank, width: int, height: int
) -> ndarray:
    """
    Discrete basis functions for a set of canonical coefficient indices.

    :return: ``P x len(indices)`` matrix, column ``k`` being the inverse
        transform of the unit vector at ``indices[k]``.
    :rtype: ndarray
    """
    layout: Layout = layoutFor(bank, height, width)
    total: int = layout.paddedShape[0] * layout.paddedShape[1]

    columns: ndarray = numpy.empty((width * height, len(indices)))
    unit: ndarray = numpy.zeros(total)

    k: int
    for k, index in enumerate(indices):
        unit[index] = 1.0
        columns[:, k] = _synthesize(unit, bank, width, height)
        unit[index] = 0.0

    return columns


def coefficientIndex(
    bank: WaveletBank, width: int, height: int, index: int
) -> Tuple[int, str, Tuple[int, int]]:
    """
    Name a canonical coefficient index.

    :return: ``(scale, orientation, (row, col))`` where scale is the
        decomposition level (coarsest = ``levels``), orientation one of
        ``scaling``, ``horizontal``, ``vertical``, ``diagonal`` and the
        position is relative to the band.
    :rtype: Tuple[int, str, Tuple[int, int]]
    """
    layout: Layout = layoutFor(bank, height, width)
    row: int
    col: int
    row, col = divmod(int(index), layout.paddedShape[1])

    def inside(spec: Tuple[slice, slice]) -> bool:
        return (
            spec[0].start <= row < spec[0].stop
            and spec[1].start <= col < spec[1].stop
        )

    approx: Tuple[slice, slice] = layout.slices[0]
    if inside(approx):
        return layout.levels, "scaling", (row, col)

    position: int
    for position, details in enumerate(layout.slices[1:]):
        key: str
        for key, spec in details.items():
            if inside(spec):
                return (
                    layout.levels - position,
                    ORIENTATIONS[key],
                    (row - spec[0].start, col - spec[1].start),
                )

    raise DomainError(ORIGIN, f"index {index} outside layout", "index")


def scalingIndices(bank: WaveletBank, width: int, height: int) -> ndarray:
    """Canonical indices of the coarsest scaling band."""
    layout: Layout = layoutFor(bank, height, width)
    rows: slice
    cols: slice
    rows, cols = layout.slices[0]
    grid: Tuple[ndarray, ndarray] = numpy.meshgrid(
        numpy.arange(rows.start, rows.stop),
        numpy.arange(cols.start, cols.stop),
        indexing="ij",
    )
    return (grid[0] * layout.paddedShape[1] + grid[1]).ravel()


def finestDiagonalDetail(image: ImageGrid, bank: WaveletBank) -> ndarray:
    """Diagonal detail band of a single-level transform."""
    detail: Tuple[ndarray, ndarray, ndarray]
    _, detail = pywt.dwt2(image.asImage(), bank.family, mode=bank.boundary)
    return detail[2].ravel()

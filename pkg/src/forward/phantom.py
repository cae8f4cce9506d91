from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy
from numpy import ndarray

from src.core.errors import DomainError, ValidationError
from src.core.imageGrid import ImageGrid

ORIGIN: str = "forward.phantom"

SPEED_OF_LIGHT: float = 299792458.0

GLYPH_ROWS: int = 7
GLYPH_COLUMNS: int = 5
GLYPH_FILL: float = 0.8

# 5x7 bitmap font, '#' = foreground
FONT: Dict[str, Tuple[str, ...]] = {
    " ": (".....",) * 7,
    "+": (".....", "..#..", "..#..", "#####", "..#..", "..#..", "....."),
    "0": (".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."),
    "1": ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "2": (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    "3": ("#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."),
    "4": ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    "5": ("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),
    "6": ("..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."),
    "7": ("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),
    "8": (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    "9": (".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."),
    "A": (".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "B": ("####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."),
    "C": (".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."),
    "D": ("###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."),
    "E": ("#####", "#....", "#....", "####.", "#....", "#....", "#####"),
    "F": ("#####", "#....", "#....", "####.", "#....", "#....", "#...."),
    "G": (".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"),
    "H": ("#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "I": (".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "J": ("..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."),
    "K": ("#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"),
    "L": ("#....", "#....", "#....", "#....", "#....", "#....", "#####"),
    "M": ("#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"),
    "N": ("#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"),
    "O": (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "P": ("####.", "#...#", "#...#", "####.", "#....", "#....", "#...."),
    "Q": (".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"),
    "R": ("####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"),
    "S": (".####", "#....", "#....", ".###.", "....#", "....#", "####."),
    "T": ("#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."),
    "U": ("#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "V": ("#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."),
    "W": ("#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."),
    "X": ("#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"),
    "Y": ("#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."),
    "Z": ("#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"),
}


@dataclass(frozen=True)
class SlabPhantom:
    """
    Binary dielectric slab: per-pixel reflectance in ``{rho0, rho1}`` with
    matching class labels, plus the slab geometry shared by all pixels.

    :param reflectance: Reflectance image, values in ``(0, 1)``.
    :type reflectance: ImageGrid
    :param labels: Per-pixel class (0 or 1), row-major.
    :type labels: ndarray
    :param thickness: Slab thickness ``d`` in meters.
    :type thickness: float
    :param nRho: Refraction index.
    :type nRho: float
    :param c: Wave speed in m/s.
    :type c: float
    """

    reflectance: ImageGrid
    labels: ndarray
    rho0: float
    rho1: float
    thickness: float = 1e-4
    nRho: float = 2.0
    c: float = SPEED_OF_LIGHT

    def __post_init__(self) -> None:
        labels: ndarray = numpy.array(numpy.ravel(self.labels), dtype=int)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

        values: ndarray = self.reflectance.values
        if labels.size != values.size:
            raise ValidationError(
                ORIGIN, "one label per pixel required", field="labels"
            )
        if not numpy.all((labels == 0) | (labels == 1)):
            raise ValidationError(ORIGIN, "labels must be 0/1", "labels")

        expected: ndarray = numpy.where(labels == 1, self.rho1, self.rho0)
        if not numpy.array_equal(values, expected):
            raise ValidationError(
                ORIGIN,
                "reflectance must equal rho0/rho1 exactly, as labelled",
                field="reflectance",
            )
        if numpy.any(values <= 0) or numpy.any(values >= 1):
            raise ValidationError(
                ORIGIN, "reflectance must lie in (0, 1)", field="rho0"
            )
        if not self.thickness > 0:
            raise ValidationError(ORIGIN, "must be > 0", field="thickness")
        if not self.nRho >= 1:
            raise ValidationError(ORIGIN, "must be >= 1", field="n_rho")
        if not self.c > 0:
            raise ValidationError(ORIGIN, "must be > 0", field="c")

    @property
    def tauRho(self) -> float:
        """One-way optical delay ``n_rho d / c`` through the slab."""
        return self.nRho * self.thickness / self.c


def glyphBitmap(glyph: str) -> ndarray:
    """
    Rasterize ``glyph`` with the embedded 5x7 font, one blank column between
    characters.

    :param glyph: Text drawn from :data:`FONT` (case-insensitive).
    :type glyph: str
    :return: Boolean ``7 x (6 n - 1)`` bitmap.
    :rtype: ndarray
    """
    if not glyph:
        raise DomainError(ORIGIN, "empty glyph", "glyph")

    unsupported: List[str] = sorted(
        {ch for ch in glyph.upper() if ch not in FONT}
    )
    if unsupported:
        raise DomainError(
            ORIGIN,
            f"unsupported characters {unsupported}; supported set is "
            f"{''.join(sorted(FONT))!r}",
            "glyph",
        )

    blocks: List[ndarray] = []

    ch: str
    for index, ch in enumerate(glyph.upper()):
        if index:
            blocks.append(numpy.zeros((GLYPH_ROWS, 1), dtype=bool))
        blocks.append(
            numpy.array([[c == "#" for c in row] for row in FONT[ch]])
        )

    return numpy.hstack(blocks)


def makeLetterPhantom(
    width: int,
    height: int,
    glyph: str,
    rho0: float,
    rho1: float,
    scale: Optional[int] = None,
    thickness: float = 1e-4,
    nRho: float = 2.0,
    c: float = SPEED_OF_LIGHT,
    pixelPitchX: float = 1e-4,
    pixelPitchY: float = 1e-4,
) -> SlabPhantom:
    """
    Draw a binary letter phantom: background ``rho0``, glyph ``rho1``.

    The font bitmap is enlarged by an integer nearest-neighbor factor (by
    default the largest one that keeps the text within 80% of the raster)
    and centered.

    :param glyph: Text to draw.
    :type glyph: str
    :param scale: Explicit enlargement factor.
    :type scale: Optional[int]
    :return: The phantom.
    :rtype: SlabPhantom
    """
    bitmap: ndarray = glyphBitmap(glyph)

    if scale is None:
        scale = int(
            min(
                GLYPH_FILL * width / bitmap.shape[1],
                GLYPH_FILL * height / bitmap.shape[0],
            )
        )
        scale = max(scale, 1)

    scaled: ndarray = numpy.kron(
        bitmap, numpy.ones((scale, scale), dtype=bool)
    )
    if scaled.shape[0] > height or scaled.shape[1] > width:
        raise DomainError(
            ORIGIN,
            f"{glyph!r} needs {scaled.shape[1]}x{scaled.shape[0]} pixels, "
            f"raster is {width}x{height}",
            "glyph",
        )

    top: int = (height - scaled.shape[0]) // 2
    left: int = (width - scaled.shape[1]) // 2

    labels: ndarray = numpy.zeros((height, width), dtype=int)
    labels[top : top + scaled.shape[0], left : left + scaled.shape[1]] = scaled

    reflectance: ImageGrid = ImageGrid(
        width=width,
        height=height,
        values=numpy.where(labels == 1, rho1, rho0).ravel(),
        pixelPitchX=pixelPitchX,
        pixelPitchY=pixelPitchY,
    )

    return SlabPhantom(
        reflectance=reflectance,
        labels=labels.ravel(),
        rho0=rho0,
        rho1=rho1,
        thickness=thickness,
        nRho=nRho,
        c=c,
    )

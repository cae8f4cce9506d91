import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy
from numpy import ndarray

from src.core.errors import DomainError, FormatError, ValidationError
from src.core.imageGrid import ImageGrid
from src.core.persistence import readRawMatrix, writeRawMatrix
from src.subspace.wavelets import (
    WaveletBank,
    coefficientIndex,
    dwt2Forward,
    layoutFor,
    scalingIndices,
    synthesisColumns,
)
from src.utils import PathLike, atomicWriteText

logger: logging.Logger = logging.getLogger(__name__)

ORIGIN: str = "subspace.sweepSubspace"

ORTHONORMAL_TOLERANCE: float = 1e-10
RANK_TOLERANCE: float = 1e-10

ORACLE: str = "oracle"
SUBSPACE_PATTERN: str = "subspace_{:03d}"

Provenance = Union[str, Tuple[Tuple[int, str, Tuple[int, int]], ...]]


@dataclass(frozen=True)
class SubspaceOptions:
    """
    Settings of the subspace stage.

    :param nCoefficients: Number ``N_j`` of retained basis functions per
        frame.
    :type nCoefficients: int
    :param forceScaling: Always keep the coarsest scaling band before
        ranking the rest.
    :type forceScaling: bool
    """

    family: str = "sym4"
    nCoefficients: int = 100
    levels: int = 0
    forceScaling: bool = False

    def __post_init__(self) -> None:
        if self.nCoefficients < 1:
            raise ValidationError(ORIGIN, "must be >= 1", "n_coefficients")
        if self.levels < 0:
            raise ValidationError(ORIGIN, "must be >= 0", "levels")

    @property
    def bank(self) -> WaveletBank:
        return WaveletBank(family=self.family, levels=self.levels)


@dataclass(frozen=True)
class SweepSubspace:
    """
    Orthonormal basis ``S^j`` (``P x N_j``) in which the distortion of frame
    ``j`` is sought. Built once from the data and never modified.

    :param provenance: ``"oracle"`` or one ``(scale, orientation,
        (row, col))`` triple per column.
    :type provenance: Provenance
    """

    basis: ndarray
    provenance: Provenance
    frameIndex: int

    def __post_init__(self) -> None:
        basis: ndarray = numpy.array(self.basis, dtype=numpy.float64)
        if basis.ndim == 1:
            basis = basis[:, None]
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

        pixels: int
        columns: int
        pixels, columns = basis.shape
        if columns < 1 or columns > pixels:
            raise ValidationError(
                ORIGIN, f"need 1 <= N_j <= P, got N_j={columns}", "basis"
            )

        gram: ndarray = basis.T @ basis
        if not numpy.allclose(
            gram, numpy.eye(columns), rtol=0, atol=ORTHONORMAL_TOLERANCE
        ):
            raise ValidationError(ORIGIN, "columns not orthonormal", "basis")

        if self.provenance != ORACLE and len(self.provenance) != columns:
            raise ValidationError(
                ORIGIN, "one provenance entry per column", "provenance"
            )

    @property
    def pixelCount(self) -> int:
        return self.basis.shape[0]

    @property
    def dimension(self) -> int:
        return self.basis.shape[1]

    def project(self, vector: ndarray) -> ndarray:
        """Orthogonal projection of ``vector`` onto the span."""
        return self.basis @ (self.basis.T @ vector)


def buildSubspace(
    frame: ndarray,
    bank: WaveletBank,
    nCoefficients: int,
    width: int,
    height: int,
    frameIndex: int = 0,
    forceScaling: bool = False,
) -> SweepSubspace:
    """
    Wavelet subspace of one observed frame: the basis functions of its
    ``nCoefficients`` largest-magnitude coefficients.

    Ties in magnitude go to the lower canonical coefficient index. On
    padded grids the cropped basis vectors are re-orthonormalized by QR and
    columns that vanish after cropping are dropped.

    :param frame: Vectorized frame ``y_j`` (length ``width * height``).
    :type frame: ndarray
    :param bank: Filter bank.
    :type bank: WaveletBank
    :param nCoefficients: ``N_j``, at most ``P``.
    :type nCoefficients: int
    :return: The subspace.
    :rtype: SweepSubspace
    """
    pixels: int = width * height
    if nCoefficients < 1:
        raise DomainError(ORIGIN, "must be >= 1", "n_coefficients")
    if nCoefficients > pixels:
        raise DomainError(
            ORIGIN,
            f"N_j={nCoefficients} exceeds P={pixels}",
            "n_coefficients",
        )

    coefficients: ndarray = dwt2Forward(
        ImageGrid(width=width, height=height, values=frame), bank
    )
    canonical: ndarray = numpy.arange(coefficients.size)
    ranked: ndarray = numpy.lexsort((canonical, -numpy.abs(coefficients)))

    if forceScaling:
        forced: ndarray = scalingIndices(bank, width, height)
        forced = forced[
            numpy.lexsort((forced, -numpy.abs(coefficients[forced])))
        ][:nCoefficients]
        rest: ndarray = ranked[~numpy.isin(ranked, forced)]
        selected: ndarray = numpy.concatenate(
            [forced, rest[: nCoefficients - forced.size]]
        )
    else:
        selected = ranked[:nCoefficients]

    basis: ndarray = synthesisColumns(selected, bank, width, height)

    if layoutFor(bank, height, width).paddedShape != (height, width):
        q: ndarray
        r: ndarray
        q, r = numpy.linalg.qr(basis)
        keep: ndarray = numpy.abs(numpy.diag(r)) > RANK_TOLERANCE
        if not numpy.all(keep):
            logger.debug(
                "frame %d: %d cropped basis vectors dropped",
                frameIndex,
                int(numpy.sum(~keep)),
            )
        basis = q[:, keep]
        selected = selected[keep]

    provenance: Tuple = tuple(
        coefficientIndex(bank, width, height, int(index))
        for index in selected
    )
    return SweepSubspace(
        basis=basis, provenance=provenance, frameIndex=frameIndex
    )


def buildSubspaces(
    frames: ndarray,
    options: SubspaceOptions,
    width: int,
    height: int,
) -> List[SweepSubspace]:
    """One wavelet subspace per column of ``frames``."""
    bank: WaveletBank = options.bank
    subspaces: List[SweepSubspace] = [
        buildSubspace(
            frame=frames[:, j],
            bank=bank,
            nCoefficients=options.nCoefficients,
            width=width,
            height=height,
            frameIndex=j,
            forceScaling=options.forceScaling,
        )
        for j in range(frames.shape[1])
    ]
    logger.info(
        "built %d %s subspaces with N_j=%d",
        len(subspaces),
        bank.family,
        options.nCoefficients,
    )
    return subspaces


def oracleSubspace(
    trueDistortions: ndarray, j: Union[int, Sequence[int]]
) -> SweepSubspace:
    """
    Subspace spanned by the noiseless distortion column(s) of frame ``j``.

    :param trueDistortions: ``P x M`` matrix of true ``u_j``.
    :type trueDistortions: ndarray
    :param j: Frame index, or several column indices to span jointly.
    :type j: Union[int, Sequence[int]]
    :return: Orthonormalized span, provenance ``"oracle"``.
    :rtype: SweepSubspace
    """
    columns: ndarray = numpy.atleast_1d(numpy.asarray(j, dtype=int))
    vectors: ndarray = numpy.asarray(trueDistortions, dtype=numpy.float64)[
        :, columns
    ]

    if numpy.any(numpy.linalg.norm(vectors, axis=0) == 0):
        raise DomainError(ORIGIN, f"zero distortion column in {j}", "frame")

    q: ndarray
    r: ndarray
    q, r = numpy.linalg.qr(vectors)
    keep: ndarray = numpy.abs(numpy.diag(r)) > RANK_TOLERANCE * numpy.max(
        numpy.abs(numpy.diag(r))
    )

    return SweepSubspace(
        basis=q[:, keep], provenance=ORACLE, frameIndex=int(columns[0])
    )


def oracleSubspaces(trueDistortions: ndarray) -> List[SweepSubspace]:
    return [
        oracleSubspace(trueDistortions, j)
        for j in range(trueDistortions.shape[1])
    ]


def _formatProvenance(subspace: SweepSubspace) -> str:
    if subspace.provenance == ORACLE:
        return f"{ORACLE}\n"

    return "".join(
        f"{scale},{orientation},{row},{col}\n"
        for scale, orientation, (row, col) in subspace.provenance
    )


def _parseProvenance(text: str, path: str) -> Provenance:
    lines: List[str] = [line for line in text.splitlines() if line.strip()]
    if lines == [ORACLE]:
        return ORACLE

    entries: List[Tuple[int, str, Tuple[int, int]]] = []
    for lineNumber, line in enumerate(lines, start=1):
        parts: List[str] = line.split(",")
        try:
            scale, orientation, row, col = parts
            entries.append((int(scale), orientation, (int(row), int(col))))
        except ValueError:
            raise FormatError(
                ORIGIN, f"line {lineNumber}: bad entry {line!r}", "prov", path
            )
    return tuple(entries)


def writeSubspaces(
    subspaces: Sequence[SweepSubspace],
    path: PathLike,
    width: int,
    height: int,
) -> None:
    """
    Store each subspace as ``subspace_XXX.raw`` (basis, raw matrix format)
    plus ``subspace_XXX.prov`` (one ``scale,orientation,row,col`` line per
    column, or ``oracle``), ``XXX`` being the frame index.
    """
    directory: Path = Path(path)

    subspace: SweepSubspace
    for subspace in subspaces:
        stem: str = SUBSPACE_PATTERN.format(subspace.frameIndex)
        writeRawMatrix(
            directory / f"{stem}.raw", subspace.basis, width, height
        )
        atomicWriteText(
            directory / f"{stem}.prov", _formatProvenance(subspace)
        )

    logger.debug("wrote %d subspaces to %s", len(subspaces), directory)


def readSubspaces(path: PathLike) -> Tuple[List[SweepSubspace], int, int]:
    """
    Load subspaces written by :func:`writeSubspaces`, ordered by frame
    index.

    :return: ``(subspaces, width, height)``.
    :rtype: Tuple[List[SweepSubspace], int, int]
    """
    directory: Path = Path(path)
    raws: List[Path] = sorted(directory.glob("subspace_*.raw"))
    if not raws:
        raise FormatError(ORIGIN, "no subspace files", "subspace", str(path))

    subspaces: List[SweepSubspace] = []
    shape: Tuple[int, int] = (0, 0)

    raw: Path
    for raw in raws:
        basis: ndarray
        width: int
        height: int
        basis, width, height = readRawMatrix(raw)
        if subspaces and (width, height) != shape:
            raise FormatError(ORIGIN, "grid differs", "width", str(raw))
        shape = (width, height)

        prov: Path = raw.with_suffix(".prov")
        try:
            text: str = prov.read_text(encoding="utf-8")
        except OSError as error:
            raise FormatError(ORIGIN, str(error), "prov", str(prov))

        try:
            subspaces.append(
                SweepSubspace(
                    basis=basis,
                    provenance=_parseProvenance(text, str(prov)),
                    frameIndex=int(raw.stem.rsplit("_", 1)[1]),
                )
            )
        except ValidationError as error:
            raise FormatError(ORIGIN, error.message, error.field, str(raw))

    return subspaces, shape[0], shape[1]

import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy
from numpy import ndarray

from src.core.errors import FormatError, PersistenceError, ValidationError
from src.core.imageGrid import FrameStack, ImageGrid
from src.utils import PathLike, atomicWriteBytes, atomicWriteText

logger: logging.Logger = logging.getLogger(__name__)

ORIGIN: str = "core.persistence"

RAW_MAGIC: bytes = b"SWPDMOD-RAW\0\0\0\0\0"
PGM_MAXVAL: int = 65535

RAW_FILENAME: str = "stack.raw"
META_FILENAME: str = "stack.meta"
FRAME_PATTERN: str = "frame_{:03d}.pgm"

_PGM_HEADER: re.Pattern = re.compile(rb"^P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def _readBytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as error:
        raise PersistenceError(ORIGIN, f"cannot read: {error}", str(path))


def _writeBytes(path: Path, data: bytes) -> None:
    try:
        atomicWriteBytes(path=path, data=data)
    except OSError as error:
        raise PersistenceError(ORIGIN, f"cannot write: {error}", str(path))


def encodeRawMatrix(matrix: ndarray, width: int, height: int) -> bytes:
    """
    Serialize a ``P x M`` matrix: 16-byte magic, three little-endian u32
    (width, height, M), then ``P * M`` little-endian float64 in column-major
    order.

    :param matrix: Matrix with ``width * height`` rows.
    :type matrix: ndarray
    :return: Encoded payload.
    :rtype: bytes
    """
    matrix = numpy.asarray(matrix, dtype=numpy.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]

    header: bytes = numpy.array(
        [width, height, matrix.shape[1]], dtype="<u4"
    ).tobytes()
    payload: bytes = matrix.astype("<f8").tobytes(order="F")
    return RAW_MAGIC + header + payload


def decodeRawMatrix(
    data: bytes, path: Optional[str] = None
) -> Tuple[ndarray, int, int]:
    """
    Inverse of :func:`encodeRawMatrix`.

    :return: ``(matrix, width, height)``.
    :rtype: Tuple[ndarray, int, int]
    """
    headerSize: int = len(RAW_MAGIC) + 12
    if len(data) < headerSize or data[: len(RAW_MAGIC)] != RAW_MAGIC:
        raise FormatError(ORIGIN, "bad or missing magic", "magic", path)

    width: int
    height: int
    columns: int
    width, height, columns = (
        int(v)
        for v in numpy.frombuffer(
            data, dtype="<u4", count=3, offset=len(RAW_MAGIC)
        )
    )

    expected: int = width * height * columns * 8
    if len(data) - headerSize != expected:
        raise FormatError(
            ORIGIN,
            f"expected {expected} bytes, found {len(data) - headerSize}",
            "payload",
            path,
        )

    matrix: ndarray = numpy.frombuffer(
        data, dtype="<f8", offset=headerSize
    ).reshape((width * height, columns), order="F")
    return matrix.astype(numpy.float64), width, height


def writeRawMatrix(
    path: PathLike, matrix: ndarray, width: int, height: int
) -> None:
    _writeBytes(Path(path), encodeRawMatrix(matrix, width, height))


def readRawMatrix(path: PathLike) -> Tuple[ndarray, int, int]:
    return decodeRawMatrix(_readBytes(Path(path)), path=str(path))


def scaleToPgm(values: ndarray) -> Tuple[ndarray, float, float]:
    """
    Affinely map a frame onto ``[0, 65535]``.

    :param values: Frame values.
    :type values: ndarray
    :return: ``(pixels, scale, offset)`` with ``value ~ offset + scale *
        pixel``. A constant frame yields all-zero pixels and ``scale = 0``.
    :rtype: Tuple[ndarray, float, float]
    """
    low: float = float(numpy.min(values))
    high: float = float(numpy.max(values))

    if high == low:
        return numpy.zeros(values.shape, dtype=numpy.uint16), 0.0, low

    scale: float = (high - low) / PGM_MAXVAL
    pixels: ndarray = numpy.rint((values - low) / scale)
    return numpy.clip(pixels, 0, PGM_MAXVAL).astype(numpy.uint16), scale, low


def encodePgm(pixels: ndarray) -> bytes:
    """
    Encode a ``height x width`` uint16 image as binary PGM (``P5``, maxval
    65535, big-endian samples).
    """
    height: int
    width: int
    height, width = pixels.shape
    header: bytes = f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii")
    return header + pixels.astype(">u2").tobytes()


def decodePgm(data: bytes, path: Optional[str] = None) -> ndarray:
    match: Optional[re.Match] = _PGM_HEADER.match(data)
    if match is None:
        raise FormatError(ORIGIN, "not a binary PGM", "pgm_header", path)

    width: int = int(match.group(1))
    height: int = int(match.group(2))
    maxval: int = int(match.group(3))
    if maxval != PGM_MAXVAL:
        raise FormatError(
            ORIGIN, f"maxval {maxval} unsupported", "maxval", path
        )

    body: bytes = data[match.end() :]
    if len(body) != width * height * 2:
        raise FormatError(ORIGIN, "truncated samples", "pgm_payload", path)

    return numpy.frombuffer(body, dtype=">u2").reshape(height, width)


def writePgm(path: PathLike, pixels: ndarray) -> None:
    _writeBytes(Path(path), encodePgm(pixels))


def readPgm(path: PathLike) -> ndarray:
    return decodePgm(_readBytes(Path(path)), path=str(path))


def formatKeyValues(entries: Dict[str, str]) -> str:
    return "".join(f"{key}={value}\n" for key, value in entries.items())


def parseKeyValues(text: str, path: Optional[str] = None) -> Dict[str, str]:
    entries: Dict[str, str] = {}

    lineNumber: int
    line: str
    for lineNumber, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(
                ORIGIN, f"line {lineNumber} is not key=value", "meta", path
            )
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()

    return entries


def _floatText(value: float) -> str:
    return repr(float(value))


def writeFrameStack(stack: FrameStack, path: PathLike) -> None:
    """
    Persist a frame stack into directory ``path``.

    Three artifacts are written: one 16-bit PGM per frame for inspection,
    ``stack.meta`` with dimensions, per-frame scale/offset and timestamps,
    and ``stack.raw`` holding Y losslessly.

    :param stack: Stack to persist.
    :type stack: FrameStack
    :param path: Target directory (created when missing).
    :type path: PathLike
    :return: None
    :rtype: None
    """
    directory: Path = Path(path)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as error:
        raise PersistenceError(ORIGIN, f"cannot create: {error}", str(path))

    meta: Dict[str, str] = {
        "width": str(stack.width),
        "height": str(stack.height),
        "M": str(stack.frameCount),
        "pixel_pitch_x": _floatText(stack.pixelPitchX),
        "pixel_pitch_y": _floatText(stack.pixelPitchY),
    }

    j: int
    for j in range(stack.frameCount):
        pixels, scale, offset = scaleToPgm(stack.frames[:, j])
        writePgm(
            directory / FRAME_PATTERN.format(j),
            pixels.reshape(stack.height, stack.width),
        )
        meta[f"frame_{j:03d}_scale"] = _floatText(scale)
        meta[f"frame_{j:03d}_offset"] = _floatText(offset)

    meta["sample_times"] = (
        ""
        if stack.sampleTimes is None
        else ",".join(_floatText(t) for t in stack.sampleTimes)
    )

    writeRawMatrix(
        directory / RAW_FILENAME, stack.frames, stack.width, stack.height
    )
    try:
        atomicWriteText(directory / META_FILENAME, formatKeyValues(meta))
    except OSError as error:
        raise PersistenceError(ORIGIN, f"cannot write: {error}", str(path))

    logger.debug(
        "wrote %d frames (%dx%d) to %s",
        stack.frameCount,
        stack.width,
        stack.height,
        directory,
    )


def _intField(meta: Dict[str, str], key: str, path: str) -> int:
    if key not in meta:
        raise FormatError(ORIGIN, "missing", key, path)
    try:
        return int(meta[key])
    except ValueError:
        raise FormatError(ORIGIN, f"not an integer: {meta[key]!r}", key, path)


def readFrameStack(path: PathLike) -> FrameStack:
    """
    Load a stack written by :func:`writeFrameStack`.

    Y comes from the raw binary; the metadata is cross-checked against the
    raw header and every PGM header.

    :param path: Stack directory.
    :type path: PathLike
    :return: The reconstructed stack.
    :rtype: FrameStack
    """
    directory: Path = Path(path)
    where: str = str(directory)

    meta: Dict[str, str] = parseKeyValues(
        _readBytes(directory / META_FILENAME).decode("utf-8"), path=where
    )
    width: int = _intField(meta, "width", where)
    height: int = _intField(meta, "height", where)
    frameCount: int = _intField(meta, "M", where)

    frames: ndarray
    rawWidth: int
    rawHeight: int
    frames, rawWidth, rawHeight = readRawMatrix(directory / RAW_FILENAME)

    if rawWidth != width:
        raise FormatError(ORIGIN, "metadata/raw mismatch", "width", where)
    if rawHeight != height:
        raise FormatError(ORIGIN, "metadata/raw mismatch", "height", where)
    if frames.shape[1] != frameCount:
        raise FormatError(ORIGIN, "metadata/raw mismatch", "M", where)

    pgmFiles: List[Path] = sorted(directory.glob("frame_*.pgm"))
    if len(pgmFiles) != frameCount:
        raise FormatError(
            ORIGIN,
            f"metadata declares {frameCount} frames, "
            f"found {len(pgmFiles)} PGM files",
            "M",
            where,
        )

    pgm: Path
    for pgm in pgmFiles:
        pixels: ndarray = readPgm(pgm)
        if pixels.shape != (height, width):
            raise FormatError(
                ORIGIN,
                f"PGM is {pixels.shape[1]}x{pixels.shape[0]}",
                "width" if pixels.shape[1] != width else "height",
                str(pgm),
            )

    times: Optional[ndarray] = None
    if meta.get("sample_times"):
        try:
            times = numpy.array(
                [float(t) for t in meta["sample_times"].split(",")]
            )
        except ValueError:
            raise FormatError(ORIGIN, "non-numeric", "sample_times", where)

    try:
        return FrameStack(
            width=width,
            height=height,
            frames=frames,
            sampleTimes=times,
            pixelPitchX=float(meta.get("pixel_pitch_x", 1e-4)),
            pixelPitchY=float(meta.get("pixel_pitch_y", 1e-4)),
        )
    except ValidationError as error:
        raise FormatError(ORIGIN, error.message, error.field, where)


def writeImageGrid(grid: ImageGrid, path: PathLike) -> None:
    """Persist a single image as a one-frame stack directory."""
    writeFrameStack(
        FrameStack(
            width=grid.width,
            height=grid.height,
            frames=grid.values,
            pixelPitchX=grid.pixelPitchX,
            pixelPitchY=grid.pixelPitchY,
        ),
        path,
    )


def readImageGrid(path: PathLike) -> ImageGrid:
    stack: FrameStack = readFrameStack(path)
    if stack.frameCount != 1:
        raise FormatError(
            ORIGIN,
            f"expected one frame, found {stack.frameCount}",
            "M",
            str(path),
        )
    return stack.frame(0)

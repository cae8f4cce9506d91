import logging
from dataclasses import dataclass
from math import inf, isinf, isnan
from pathlib import Path
from typing import Dict, NamedTuple, Tuple

import numpy
from numpy import ndarray
from numpy.random import Generator, Philox, SeedSequence

from src.core.errors import DomainError, FormatError, ValidationError
from src.core.imageGrid import FrameStack, ImageGrid
from src.core.persistence import (
    formatKeyValues,
    parseKeyValues,
    readFrameStack,
    writeFrameStack,
)
from src.forward.phantom import SlabPhantom
from src.forward.pulse import PulseSpec, pulseValue, trainCoefficients
from src.utils import PathLike, atomicWriteText

logger: logging.Logger = logging.getLogger(__name__)

ORIGIN: str = "forward.simulate"

NOISE_MODES: Tuple[str, ...] = ("stack", "frame")
SURFACES: Tuple[str, ...] = ("tilt", "bumpy")

TRUTH_DIRECTORY: str = "truth"


def makeGenerator(*entropy: int) -> Generator:
    """
    Seeded generator on the Philox-4x64 counter-based bit generator.

    :param entropy: Seed words, e.g. ``(seed, point, trial)``.
    :type entropy: int
    :return: Independent stream for that seed tuple.
    :rtype: Generator
    """
    return Generator(Philox(SeedSequence(list(entropy))))


@dataclass(frozen=True)
class SimConfig:
    """
    Everything needed to synthesize a distorted frame stack.

    The effective probe depth at pixel ``(x, y)`` is ``z0 + eps(x, y)`` with
    ``eps = alpha1 x + alpha2 y`` for a tilted sample, plus a seeded sum of
    Gaussian bumps when ``surface == "bumpy"``.

    :param snrDb: Target SNR in dB, ``inf`` for noiseless stacks.
    :type snrDb: float
    :param noiseMode: ``"stack"`` calibrates the SNR over the whole stack,
        ``"frame"`` frame by frame.
    :type noiseMode: str
    """

    pulse: PulseSpec
    phantom: SlabPhantom
    sampleTimes: ndarray
    tiltAlpha1: float = 1e-6
    tiltAlpha2: float = 1e-4
    z0: float = 0.0
    snrDb: float = 10.0
    rngSeed: int = 0
    nReflections: int = 5
    noiseMode: str = "stack"
    surface: str = "tilt"
    bumpAmplitude: float = 2e-6
    bumpCount: int = 4
    bumpWidth: float = 0.15

    def __post_init__(self) -> None:
        times: ndarray = numpy.array(
            numpy.ravel(self.sampleTimes), dtype=numpy.float64
        )
        times.setflags(write=False)
        object.__setattr__(self, "sampleTimes", times)

        if times.size < 1:
            raise ValidationError(ORIGIN, "need >= 1 sample", "frames")
        if not numpy.all(numpy.isfinite(times)) or numpy.any(times < 0):
            raise ValidationError(
                ORIGIN, "sample times must be finite and >= 0", "window_start"
            )
        if numpy.any(numpy.diff(times) <= 0):
            raise ValidationError(
                ORIGIN, "sample times must increase", "window_end"
            )
        if self.nReflections < 1:
            raise ValidationError(ORIGIN, "must be >= 1", "n_reflections")
        if isnan(self.snrDb) or self.snrDb == -inf:
            raise ValidationError(ORIGIN, "must be a number", "snr_db")
        if self.noiseMode not in NOISE_MODES:
            raise ValidationError(
                ORIGIN, f"must be one of {NOISE_MODES}", "noise_mode"
            )
        if self.surface not in SURFACES:
            raise ValidationError(
                ORIGIN, f"must be one of {SURFACES}", "surface"
            )
        if self.bumpCount < 0:
            raise ValidationError(ORIGIN, "must be >= 0", "bump_count")
        if not self.bumpWidth > 0:
            raise ValidationError(ORIGIN, "must be > 0", "bump_width")

    @property
    def noiseless(self) -> bool:
        return isinf(self.snrDb) and self.snrDb > 0

    @property
    def grid(self) -> ImageGrid:
        return self.phantom.reflectance


class SimulatedStack(NamedTuple):
    stack: FrameStack
    groundTruth: SlabPhantom
    trueDistortions: ndarray
    noiseSigmaSq: float


def _pixelCoordinates(grid: ImageGrid) -> Tuple[ndarray, ndarray]:
    rows: ndarray
    cols: ndarray
    rows, cols = numpy.divmod(numpy.arange(grid.size), grid.width)
    return cols * grid.pixelPitchX, rows * grid.pixelPitchY


def _bumpParameters(cfg: SimConfig) -> ndarray:
    grid: ImageGrid = cfg.grid
    extentX: float = grid.width * grid.pixelPitchX
    extentY: float = grid.height * grid.pixelPitchY

    rng: Generator = makeGenerator(cfg.rngSeed, 1)
    centers: ndarray = rng.uniform(size=(cfg.bumpCount, 2)) * [
        extentX,
        extentY,
    ]
    amplitudes: ndarray = (
        cfg.bumpAmplitude
        * rng.choice([-1.0, 1.0], size=cfg.bumpCount)
        * rng.uniform(0.5, 1.0, size=cfg.bumpCount)
    )
    return numpy.column_stack([centers, amplitudes])


def surfaceProfile(cfg: SimConfig) -> ndarray:
    """
    Depth offset ``eps(x, y)`` of every pixel (meters), row-major.

    :param cfg: Simulation config.
    :type cfg: SimConfig
    :return: Length-P vector.
    :rtype: ndarray
    """
    grid: ImageGrid = cfg.grid
    x: ndarray
    y: ndarray
    x, y = _pixelCoordinates(grid)

    eps: ndarray = cfg.tiltAlpha1 * x + cfg.tiltAlpha2 * y

    if cfg.surface == "bumpy" and cfg.bumpCount > 0:
        radius: float = cfg.bumpWidth * max(
            grid.width * grid.pixelPitchX, grid.height * grid.pixelPitchY
        )
        for cx, cy, amplitude in _bumpParameters(cfg):
            eps = eps + amplitude * numpy.exp(
                -((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * radius**2)
            )

    return eps


def _distortionMatrix(
    cfg: SimConfig, eps: ndarray, rho: ndarray, times: ndarray
) -> ndarray:
    coefficients: ndarray = trainCoefficients(rho, cfg.nReflections)
    delays: ndarray = (
        2.0 * numpy.arange(cfg.nReflections + 1) * cfg.phantom.tauRho
    )

    # P x M x (n + 1) arguments of the pulse
    arguments: ndarray = (
        times[None, :, None]
        + ((cfg.z0 + eps) / cfg.phantom.c)[:, None, None]
        - delays[None, None, :]
    )
    waves: ndarray = pulseValue(cfg.pulse, arguments)
    return numpy.einsum("pmk,pk->pm", waves, coefficients)


def reflectedField(cfg: SimConfig, pixel: int, t: float) -> float:
    """
    Noiseless reflected field at one pixel and time.

    ``rho * sum_k coeff_k * chi(t + z / c - delay_k)`` with
    ``z = z0 + eps(x, y)``.

    :param pixel: Row-major pixel index.
    :type pixel: int
    :param t: Time in seconds.
    :type t: float
    :return: Field value.
    :rtype: float
    """
    grid: ImageGrid = cfg.grid
    if not 0 <= pixel < grid.size:
        raise DomainError(ORIGIN, f"out of range: {pixel}", "pixel")

    eps: ndarray = surfaceProfile(cfg)[pixel : pixel + 1]
    rho: ndarray = grid.values[pixel : pixel + 1]
    u: ndarray = _distortionMatrix(cfg, eps, rho, numpy.array([t]))
    return float(rho[0] * u[0, 0])


def addNoise(
    signal: ndarray, snrDb: float, rng: Generator, mode: str = "stack"
) -> Tuple[ndarray, float]:
    """
    Add white Gaussian noise at a target SNR.

    The noise variance is set so that the expected ratio of signal power to
    noise power equals ``10^(snrDb / 10)``, either over the whole matrix
    (``"stack"``) or column by column (``"frame"``).

    :param signal: ``P x M`` noiseless stack.
    :type signal: ndarray
    :param snrDb: Target SNR; ``inf`` returns the signal unchanged.
    :type snrDb: float
    :return: ``(noisy, noiseVariance)``; in frame mode the variance is the
        mean over frames.
    :rtype: Tuple[ndarray, float]
    """
    if isinf(snrDb) and snrDb > 0:
        return signal.copy(), 0.0

    if mode == "frame":
        powers: ndarray = numpy.mean(signal**2, axis=0)
    else:
        powers = numpy.full(signal.shape[1], numpy.mean(signal**2))

    if numpy.any(powers == 0):
        raise DomainError(
            ORIGIN, "cannot reach a finite SNR on a zero signal", "snr_db"
        )

    variances: ndarray = powers / 10.0 ** (snrDb / 10.0)
    noise: ndarray = rng.standard_normal(signal.shape) * numpy.sqrt(variances)
    return signal + noise, float(numpy.mean(variances))


def noiselessDistortions(cfg: SimConfig) -> ndarray:
    """
    :return: ``P x M`` matrix of the multiplicative factors ``u_j``.
    :rtype: ndarray
    """
    return _distortionMatrix(
        cfg,
        surfaceProfile(cfg),
        cfg.grid.values,
        cfg.sampleTimes,
    )


def simulateStack(cfg: SimConfig) -> SimulatedStack:
    """
    Synthesize a distorted, noisy frame stack with known ground truth.

    Column ``j`` of the stack is ``rho * u_j + n_j`` sampled at
    ``cfg.sampleTimes[j]``.

    :param cfg: Simulation config.
    :type cfg: SimConfig
    :return: The stack, the phantom, the true distortions and the noise
        variance actually used.
    :rtype: SimulatedStack
    """
    grid: ImageGrid = cfg.grid
    distortions: ndarray = noiselessDistortions(cfg)
    signal: ndarray = grid.values[:, None] * distortions

    noisy: ndarray
    noiseSigmaSq: float
    noisy, noiseSigmaSq = addNoise(
        signal=signal,
        snrDb=cfg.snrDb,
        rng=makeGenerator(cfg.rngSeed, 0),
        mode=cfg.noiseMode,
    )

    logger.info(
        "simulated %d frames on %dx%d, snr=%s dB, noise variance %.3e",
        cfg.sampleTimes.size,
        grid.width,
        grid.height,
        cfg.snrDb,
        noiseSigmaSq,
    )

    stack: FrameStack = FrameStack(
        width=grid.width,
        height=grid.height,
        frames=noisy,
        sampleTimes=cfg.sampleTimes,
        pixelPitchX=grid.pixelPitchX,
        pixelPitchY=grid.pixelPitchY,
    )
    return SimulatedStack(
        stack=stack,
        groundTruth=cfg.phantom,
        trueDistortions=distortions,
        noiseSigmaSq=noiseSigmaSq,
    )


def writeSimulation(result: SimulatedStack, path: PathLike) -> None:
    """
    Write the stack into ``path`` and the ground truth into
    ``path/truth``: reflectance, labels and true distortions as frame stacks
    plus ``truth.meta`` with the slab parameters and noise variance.
    """
    directory: Path = Path(path)
    truth: Path = directory / TRUTH_DIRECTORY
    phantom: SlabPhantom = result.groundTruth
    grid: ImageGrid = phantom.reflectance

    writeFrameStack(result.stack, directory)

    single: Dict[str, ndarray] = {
        "reflectance": grid.values,
        "labels": phantom.labels.astype(numpy.float64),
    }
    name: str
    for name, values in single.items():
        writeFrameStack(
            FrameStack(
                width=grid.width,
                height=grid.height,
                frames=values,
                pixelPitchX=grid.pixelPitchX,
                pixelPitchY=grid.pixelPitchY,
            ),
            truth / name,
        )
    writeFrameStack(
        result.stack.withFrames(result.trueDistortions), truth / "distortions"
    )

    meta: Dict[str, str] = {
        "rho0": repr(phantom.rho0),
        "rho1": repr(phantom.rho1),
        "thickness": repr(phantom.thickness),
        "n_rho": repr(phantom.nRho),
        "c": repr(phantom.c),
        "noise_sigma_sq": repr(result.noiseSigmaSq),
    }
    atomicWriteText(truth / "truth.meta", formatKeyValues(meta))


def readGroundTruth(path: PathLike) -> Tuple[SlabPhantom, ndarray, float]:
    """
    Load the ground truth written next to a simulated stack.

    :param path: Stack directory (the one holding ``truth/``) or the truth
        directory itself.
    :type path: PathLike
    :return: ``(phantom, trueDistortions, noiseSigmaSq)``.
    :rtype: Tuple[SlabPhantom, ndarray, float]
    """
    truth: Path = Path(path)
    if (truth / TRUTH_DIRECTORY).is_dir():
        truth = truth / TRUTH_DIRECTORY

    metaPath: Path = truth / "truth.meta"
    try:
        meta: Dict[str, str] = parseKeyValues(
            metaPath.read_text(encoding="utf-8"), path=str(metaPath)
        )
    except OSError as error:
        raise FormatError(ORIGIN, str(error), "truth.meta", str(metaPath))

    reflectance: FrameStack = readFrameStack(truth / "reflectance")
    labels: FrameStack = readFrameStack(truth / "labels")
    distortions: FrameStack = readFrameStack(truth / "distortions")

    try:
        phantom: SlabPhantom = SlabPhantom(
            reflectance=reflectance.frame(0),
            labels=labels.frames[:, 0].astype(int),
            rho0=float(meta["rho0"]),
            rho1=float(meta["rho1"]),
            thickness=float(meta["thickness"]),
            nRho=float(meta["n_rho"]),
            c=float(meta["c"]),
        )
    except KeyError as error:
        raise FormatError(ORIGIN, "missing", str(error), str(metaPath))
    except ValidationError as error:
        raise FormatError(ORIGIN, error.message, error.field, str(truth))

    return phantom, distortions.frames, float(meta["noise_sigma_sq"])

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy
import pandas
import scipy.linalg
from numpy import ndarray
from pandas import DataFrame
from scipy.special import log_ndtr
from scipy.stats import median_abs_deviation

from src.core.errors import ContractError, DivergenceError, ValidationError
from src.core.imageGrid import FrameStack, ImageGrid
from src.core.persistence import writeFrameStack, writeImageGrid
from src.core.priors import PriorConfig
from src.subspace.sweepSubspace import SweepSubspace
from src.subspace.wavelets import WaveletBank, finestDiagonalDetail
from src.utils import PathLike, atomicWriteText

logger: logging.Logger = logging.getLogger(__name__)

ORIGIN: str = "solvers.altmin"

# noise variance never drops below signal power / 10^6 (60 dB)
NOISE_FLOOR_RATIO: float = 1e-6

TRACE_FILENAME: str = "trace.csv"

ArrayLike = Union[float, ndarray]


@dataclass(frozen=True)
class SolverOptions:
    """
    Convergence control of the alternating solver.

    :param maxIters: Iteration cap.
    :type maxIters: int
    :param relTol: Stop once ``||rho_new - rho|| / ||rho||`` drops below.
    :type relTol: float
    :param rhoFloor: Lower clamp of the diagonal ``diag(rho)`` used in the
        sweep least-squares solve; the reported image is never clamped.
    :type rhoFloor: float
    :param exactTruncationConstants: Add the per-class log normalizer of the
        truncated-normal prior to the pixel cost.
    :type exactTruncationConstants: bool
    """

    maxIters: int = 50
    relTol: float = 1e-6
    rhoFloor: float = 1e-8
    exactTruncationConstants: bool = False

    def __post_init__(self) -> None:
        if self.maxIters < 1:
            raise ValidationError(ORIGIN, "must be >= 1", "max_iters")
        if not self.relTol > 0:
            raise ValidationError(ORIGIN, "must be > 0", "rel_tol")
        if not self.rhoFloor >= 0:
            raise ValidationError(ORIGIN, "must be >= 0", "rho_floor")


@dataclass(frozen=True)
class SolverState:
    """
    Snapshot of the alternating solver. ``distortions[:, j]`` is always
    ``S^j alpha_j`` for the stored coefficients.

    :param rho: Reflectance estimate, length P, non-negative.
    :type rho: ndarray
    :param labels: Class of every pixel (0 or 1).
    :type labels: ndarray
    :param alphas: Per-frame subspace coefficients.
    :type alphas: Tuple[ndarray, ...]
    :param distortions: ``P x M`` distortion estimates.
    :type distortions: ndarray
    :param objectiveTrace: Objective after each completed iteration.
    :type objectiveTrace: Tuple[float, ...]
    :param changeTrace: Relative image change of each iteration.
    :type changeTrace: Tuple[float, ...]
    """

    rho: ndarray
    labels: ndarray
    alphas: Tuple[ndarray, ...]
    distortions: ndarray
    iteration: int = 0
    objectiveTrace: Tuple[float, ...] = ()
    changeTrace: Tuple[float, ...] = ()
    converged: bool = False
    noiseSigmaSq: float = 0.0

    def __post_init__(self) -> None:
        array: ndarray
        for name in ("rho", "labels", "distortions"):
            array = numpy.array(getattr(self, name))
            array.setflags(write=False)
            object.__setattr__(self, name, array)

        if numpy.any(self.rho < 0):
            raise ValidationError(ORIGIN, "rho must be >= 0", "rho")

    @property
    def objective(self) -> float:
        return self.objectiveTrace[-1] if self.objectiveTrace else numpy.nan


def _classParameters(
    prior: PriorConfig, c: ArrayLike
) -> Tuple[ndarray, ndarray, ndarray]:
    c = numpy.asarray(c)
    means: ndarray = numpy.where(c == 1, prior.rho1, prior.rho0)
    variances: ndarray = numpy.where(c == 1, prior.sigma1Sq, prior.sigma0Sq)
    probabilities: ndarray = numpy.where(c == 1, prior.p1, prior.p0)
    return means, variances, probabilities


def _noiseVariance(prior: PriorConfig) -> float:
    if prior.noiseSigmaSq is None:
        raise ContractError(
            ORIGIN, "noise variance unresolved; estimate it before solving"
        )
    return prior.noiseSigmaSq


def sweepUpdate(
    y: ndarray, rho: ndarray, subspace: SweepSubspace, rhoFloor: float = 0.0
) -> ndarray:
    """
    Least-squares distortion coefficients of one frame,
    ``argmin_a ||y - diag(rho) S a||``.

    Solved through a complete orthogonal factorization (LAPACK ``gelsy``),
    which returns the minimum-norm solution when ``diag(rho) S`` is rank
    deficient.

    :param y: Frame ``y_j``.
    :type y: ndarray
    :param rho: Current image.
    :type rho: ndarray
    :param subspace: ``S^j``.
    :type subspace: SweepSubspace
    :param rhoFloor: Clamp applied to ``rho`` in the system matrix.
    :type rhoFloor: float
    :return: ``alpha_j`` of length ``N_j``.
    :rtype: ndarray
    """
    if y.shape[0] != subspace.pixelCount or rho.shape[0] != y.shape[0]:
        raise ContractError(
            ORIGIN,
            f"frame/image/subspace sizes {y.shape[0]}, {rho.shape[0]}, "
            f"{subspace.pixelCount} disagree",
        )

    scaled: ndarray = numpy.maximum(rho, rhoFloor)[:, None] * subspace.basis

    alpha: ndarray
    rank: int
    alpha, _, rank, _ = scipy.linalg.lstsq(scaled, y, lapack_driver="gelsy")
    if rank < subspace.dimension:
        logger.debug(
            "frame %d: rank %d < N_j=%d, minimum-norm solution",
            subspace.frameIndex,
            rank,
            subspace.dimension,
        )
    return alpha


def mapPixelUpdate(
    yRow: ndarray, uRow: ndarray, prior: PriorConfig, c: ArrayLike
) -> ArrayLike:
    """
    Constrained MAP value of a pixel given its class:

    ``max((s^2 rho_c + s_c^2 sum(y u)) / (s^2 + s_c^2 sum(u^2)), 0)``.

    Works on a single pixel (``M`` vectors) or on all pixels at once
    (``P x M`` rows, ``c`` scalar or length ``P``).
    """
    noise: float = _noiseVariance(prior)
    means: ndarray
    variances: ndarray
    means, variances, _ = _classParameters(prior, c)

    yu: ndarray = numpy.sum(numpy.asarray(yRow) * uRow, axis=-1)
    uu: ndarray = numpy.sum(numpy.asarray(uRow) ** 2, axis=-1)

    value: ndarray = numpy.maximum(
        (noise * means + variances * yu) / (noise + variances * uu), 0.0
    )
    return float(value) if value.ndim == 0 else value


def pixelCost(
    rho: ArrayLike,
    c: ArrayLike,
    yRow: ndarray,
    uRow: ndarray,
    prior: PriorConfig,
    exactTruncation: bool = False,
) -> ArrayLike:
    """
    Negative log posterior of one pixel up to a class-independent constant:

    ``log(s_c / p_c) + (rho - rho_c)^2 / (2 s_c^2)
    + sum_j (y_j - rho u_j)^2 / (2 s^2)``

    and ``+inf`` for ``rho < 0``. With ``exactTruncation`` the class term
    also carries ``log Phi(rho_c / s_c)``, the mass the normal prior keeps
    on the positive half-line.
    """
    noise: float = _noiseVariance(prior)
    rho = numpy.asarray(rho, dtype=numpy.float64)

    means: ndarray
    variances: ndarray
    probabilities: ndarray
    means, variances, probabilities = _classParameters(prior, c)

    residual: ndarray = numpy.asarray(yRow) - rho[..., None] * uRow
    cost: ndarray = (
        0.5 * numpy.log(variances)
        - numpy.log(probabilities)
        + (rho - means) ** 2 / (2.0 * variances)
        + numpy.sum(residual**2, axis=-1) / (2.0 * noise)
    )
    if exactTruncation:
        cost = cost + log_ndtr(means / numpy.sqrt(variances))

    cost = numpy.where(rho < 0, numpy.inf, cost)
    return float(cost) if cost.ndim == 0 else cost


def classifyPixel(
    w0: ArrayLike,
    w1: ArrayLike,
    yRow: ndarray,
    uRow: ndarray,
    prior: PriorConfig,
    exactTruncation: bool = False,
) -> Tuple[ArrayLike, ArrayLike]:
    """
    Pick the class with the lower cost at its own candidate value; class 0
    wins ties.

    :return: ``(rho, label)``, scalars or per-pixel arrays.
    :rtype: Tuple[ArrayLike, ArrayLike]
    """
    g0: ndarray = numpy.asarray(
        pixelCost(w0, 0, yRow, uRow, prior, exactTruncation)
    )
    g1: ndarray = numpy.asarray(
        pixelCost(w1, 1, yRow, uRow, prior, exactTruncation)
    )

    first: ndarray = g0 <= g1
    rho: ndarray = numpy.where(first, w0, w1)
    labels: ndarray = numpy.where(first, 0, 1)

    if rho.ndim == 0:
        return float(rho), int(labels)
    return rho, labels


def totalObjective(
    state: SolverState,
    stack: FrameStack,
    prior: PriorConfig,
    exactTruncation: bool = False,
) -> float:
    """Sum of the pixel costs at the state's image, labels and distortions."""
    return float(
        numpy.sum(
            pixelCost(
                state.rho,
                state.labels,
                stack.frames,
                state.distortions,
                prior,
                exactTruncation,
            )
        )
    )


def noiseFloor(frames: ndarray) -> float:
    return NOISE_FLOOR_RATIO * float(numpy.mean(frames**2))


def estimateNoiseVariance(
    stack: FrameStack, bank: Optional[WaveletBank] = None
) -> float:
    """
    Robust noise variance from the first frame: normal-consistent median
    absolute deviation of the finest diagonal wavelet band, squared, and
    floored 60 dB below the stack power.

    :param stack: Observed stack.
    :type stack: FrameStack
    :param bank: Filter bank, ``sym4`` by default.
    :type bank: Optional[WaveletBank]
    :return: Estimated ``sigma^2``.
    :rtype: float
    """
    bank = bank or WaveletBank()
    detail: ndarray = finestDiagonalDetail(stack.frame(0), bank)
    sigma: float = float(median_abs_deviation(detail, scale="normal"))

    estimate: float = max(sigma**2, noiseFloor(stack.frames))
    logger.info("estimated noise variance %.3e", estimate)
    return estimate


def resolvePrior(
    prior: PriorConfig,
    stack: FrameStack,
    knownSigmaSq: Optional[float] = None,
) -> PriorConfig:
    """
    Fill in the noise variance of ``prior`` when left as auto: the known
    value (e.g. from a simulation) when given, otherwise
    :func:`estimateNoiseVariance`. Either way it is floored like the
    estimator.
    """
    if prior.noiseSigmaSq is not None:
        return prior

    sigmaSq: float = (
        estimateNoiseVariance(stack)
        if knownSigmaSq is None
        else max(knownSigmaSq, noiseFloor(stack.frames))
    )
    return replace(prior, noiseSigmaSq=sigmaSq)


def _dataMisfit(y: ndarray, rho: ndarray, u: ndarray) -> float:
    return float(numpy.sum((y - rho * u) ** 2))


def _distortionStep(
    stack: FrameStack,
    subspaces: Sequence[SweepSubspace],
    rho: ndarray,
    rhoFloor: float,
) -> Tuple[List[ndarray], ndarray]:
    alphas: List[ndarray] = []
    distortions: ndarray = numpy.empty(stack.frames.shape)
    clamped: bool = rhoFloor > 0 and bool(numpy.any(rho < rhoFloor))

    j: int
    subspace: SweepSubspace
    for j, subspace in enumerate(subspaces):
        y: ndarray = stack.frames[:, j]
        alpha: ndarray = sweepUpdate(y, rho, subspace, rhoFloor)
        u: ndarray = subspace.basis @ alpha

        # the clamped system can lose to the exact one on pixels at rho = 0
        if clamped:
            exact: ndarray = sweepUpdate(y, rho, subspace)
            uExact: ndarray = subspace.basis @ exact
            if _dataMisfit(y, rho, uExact) < _dataMisfit(y, rho, u):
                alpha, u = exact, uExact

        alphas.append(alpha)
        distortions[:, j] = u

    return alphas, distortions


def _checkDimensions(
    stack: FrameStack, subspaces: Sequence[SweepSubspace]
) -> None:
    if len(subspaces) != stack.frameCount:
        raise ContractError(
            ORIGIN,
            f"{len(subspaces)} subspaces for {stack.frameCount} frames",
        )

    subspace: SweepSubspace
    for subspace in subspaces:
        if subspace.pixelCount != stack.pixelCount:
            raise ContractError(
                ORIGIN,
                f"subspace {subspace.frameIndex} has {subspace.pixelCount} "
                f"rows, stack has {stack.pixelCount} pixels",
            )


def solve(
    stack: FrameStack,
    subspaces: Sequence[SweepSubspace],
    prior: PriorConfig,
    options: SolverOptions = SolverOptions(),
    initialRho: Optional[ndarray] = None,
) -> SolverState:
    """
    Alternating MAP demodulation.

    Starting from ``rho = 1`` (or ``initialRho``), every iteration refits
    the distortion coefficients of all frames by least squares and then
    re-estimates every pixel in closed form for both classes, keeping the
    cheaper class. The objective is recorded after each iteration and never
    increases.

    :param stack: Observations Y.
    :type stack: FrameStack
    :param subspaces: One subspace per frame.
    :type subspaces: Sequence[SweepSubspace]
    :param prior: Prior with a resolved noise variance (see
        :func:`resolvePrior`).
    :type prior: PriorConfig
    :param options: Convergence control.
    :type options: SolverOptions
    :param initialRho: Warm start.
    :type initialRho: Optional[ndarray]
    :return: Final state.
    :rtype: SolverState
    """
    _checkDimensions(stack, subspaces)
    noise: float = _noiseVariance(prior)
    exact: bool = options.exactTruncationConstants

    rho: ndarray = (
        numpy.ones(stack.pixelCount)
        if initialRho is None
        else numpy.array(initialRho, dtype=numpy.float64)
    )
    if rho.shape != (stack.pixelCount,):
        raise ContractError(ORIGIN, f"initial image has shape {rho.shape}")

    state: Optional[SolverState] = None
    objectives: List[float] = []
    changes: List[float] = []

    iteration: int
    for iteration in range(1, options.maxIters + 1):
        alphas: List[ndarray]
        distortions: ndarray
        alphas, distortions = _distortionStep(
            stack, subspaces, rho, options.rhoFloor
        )

        w0: ndarray = mapPixelUpdate(stack.frames, distortions, prior, 0)
        w1: ndarray = mapPixelUpdate(stack.frames, distortions, prior, 1)
        labels: ndarray
        newRho: ndarray
        newRho, labels = classifyPixel(
            w0, w1, stack.frames, distortions, prior, exact
        )

        if not numpy.all(numpy.isfinite(newRho)) or not numpy.all(
            numpy.isfinite(distortions)
        ):
            raise DivergenceError(ORIGIN, "non-finite iterate", iteration)

        norm: float = float(numpy.linalg.norm(rho))
        change: float = float(numpy.linalg.norm(newRho - rho)) / (
            norm if norm > 0 else 1.0
        )
        rho = newRho

        state = SolverState(
            rho=rho,
            labels=labels,
            alphas=tuple(alphas),
            distortions=distortions,
            iteration=iteration,
            noiseSigmaSq=noise,
        )
        objectives.append(totalObjective(state, stack, prior, exact))
        changes.append(change)

        logger.info(
            "iteration %d: objective %.9e, relative change %.3e",
            iteration,
            objectives[-1],
            change,
        )

        if change < options.relTol:
            break

    converged: bool = changes[-1] < options.relTol
    if not converged:
        logger.warning(
            "no convergence after %d iterations (change %.3e)",
            options.maxIters,
            changes[-1],
        )

    return replace(
        state,
        objectiveTrace=tuple(objectives),
        changeTrace=tuple(changes),
        converged=converged,
    )


def traceTable(state: SolverState) -> DataFrame:
    return DataFrame(
        {
            "iteration": numpy.arange(1, len(state.objectiveTrace) + 1),
            "objective": state.objectiveTrace,
            "rel_change": state.changeTrace,
        }
    )


def writeSolverState(
    state: SolverState, stack: FrameStack, path: PathLike
) -> None:
    """
    Write ``rho/`` and ``labels/`` (single-frame stacks), ``distortions/``
    (the ``u_j`` stack) and ``trace.csv`` into ``path``.
    """
    directory: Path = Path(path)
    reference: ImageGrid = stack.frame(0)

    writeImageGrid(reference.withValues(state.rho), directory / "rho")
    writeImageGrid(
        reference.withValues(state.labels.astype(numpy.float64)),
        directory / "labels",
    )
    writeFrameStack(
        stack.withFrames(state.distortions), directory / "distortions"
    )
    atomicWriteText(
        directory / TRACE_FILENAME,
        traceTable(state).to_csv(index=False, float_format="%.17g"),
    )


def readTrace(path: PathLike) -> DataFrame:
    return pandas.read_csv(Path(path) / TRACE_FILENAME)

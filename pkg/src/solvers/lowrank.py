import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy
import scipy.linalg
from numpy import ndarray
from numpy.random import Generator

from src.core.errors import (
    ContractError,
    DivergenceError,
    DomainError,
    ValidationError,
)
from src.core.imageGrid import FrameStack
from src.core.persistence import (
    writeFrameStack,
    writeImageGrid,
    writeRawMatrix,
)
from src.core.priors import PriorConfig
from src.forward.simulate import makeGenerator
from src.subspace.sweepSubspace import SweepSubspace
from src.utils import PathLike, atomicWriteText

logger: logging.Logger = logging.getLogger(__name__)

ORIGIN: str = "solvers.lowrank"

POWER_ITERATIONS: int = 50
POWER_SEED: int = 0
STEP_MARGIN: float = 1.05
PIVOT_TOLERANCE: float = 1e-12
# halvings of the threshold from lambdaMax before the final weight
CONTINUATION_STAGES: int = 30


@dataclass(frozen=True)
class MeasurementOperator:
    """
    Linear map from the lifted matrix ``X`` (``K x sum N_j``) to the
    ``P x M`` observation grid,
    ``A(X)[i, j] = Q[i, :] X[:, block j] S^j[i, :]^T``.

    Never materializes the ``P * M`` rank-one measurement matrices.

    :param subspaces: One subspace per frame; the column blocks of ``X``
        follow their order.
    :type subspaces: Tuple[SweepSubspace, ...]
    :param imageBasis: ``P x K`` image subspace ``Q``; ``None`` is the
        identity (``K = P``).
    :type imageBasis: Optional[ndarray]
    """

    subspaces: Tuple[SweepSubspace, ...]
    imageBasis: Optional[ndarray] = None

    def __post_init__(self) -> None:
        subspaces: Tuple[SweepSubspace, ...] = tuple(self.subspaces)
        object.__setattr__(self, "subspaces", subspaces)
        if not subspaces:
            raise ValidationError(ORIGIN, "need >= 1 subspace", "subspaces")

        pixels: int = subspaces[0].pixelCount
        if any(s.pixelCount != pixels for s in subspaces):
            raise ValidationError(
                ORIGIN, "subspaces disagree on P", "subspaces"
            )

        if self.imageBasis is not None:
            basis: ndarray = numpy.array(self.imageBasis, dtype=numpy.float64)
            if basis.ndim != 2 or basis.shape[0] != pixels:
                raise ValidationError(
                    ORIGIN, f"Q must have {pixels} rows", "image_basis"
                )
            basis.setflags(write=False)
            object.__setattr__(self, "imageBasis", basis)

    @property
    def pixelCount(self) -> int:
        return self.subspaces[0].pixelCount

    @property
    def frameCount(self) -> int:
        return len(self.subspaces)

    @property
    def imageDimension(self) -> int:
        if self.imageBasis is None:
            return self.pixelCount
        return self.imageBasis.shape[1]

    @property
    def offsets(self) -> ndarray:
        """Start column of each frame block, plus the total width."""
        return numpy.concatenate(
            [[0], numpy.cumsum([s.dimension for s in self.subspaces])]
        )

    @property
    def liftedShape(self) -> Tuple[int, int]:
        return self.imageDimension, int(self.offsets[-1])

    @property
    def outputShape(self) -> Tuple[int, int]:
        return self.pixelCount, self.frameCount

    def block(self, X: ndarray, j: int) -> ndarray:
        return X[:, self.offsets[j] : self.offsets[j + 1]]

    def image(self, beta: ndarray) -> ndarray:
        """``Q beta``."""
        return beta if self.imageBasis is None else self.imageBasis @ beta


def _checkShape(actual: Tuple[int, ...], expected: Tuple[int, ...]) -> None:
    if tuple(actual) != tuple(expected):
        raise ContractError(
            ORIGIN, f"expected shape {expected}, got {tuple(actual)}"
        )


def applyOperator(op: MeasurementOperator, X: ndarray) -> ndarray:
    """
    Forward measurement ``A(X)``.

    :param op: The operator.
    :type op: MeasurementOperator
    :param X: ``K x sum N_j`` matrix.
    :type X: ndarray
    :return: ``P x M`` predicted observations.
    :rtype: ndarray
    """
    _checkShape(X.shape, op.liftedShape)

    QX: ndarray = X if op.imageBasis is None else op.imageBasis @ X
    out: ndarray = numpy.empty(op.outputShape)

    j: int
    subspace: SweepSubspace
    for j, subspace in enumerate(op.subspaces):
        out[:, j] = numpy.sum(op.block(QX, j) * subspace.basis, axis=1)
    return out


def applyAdjoint(op: MeasurementOperator, R: ndarray) -> ndarray:
    """
    Adjoint ``A*(R) = sum_ij R[i, j] Q[i, :]^T S^j[i, :] P_j``, assembled one
    frame block at a time as ``Q^T diag(R[:, j]) S^j``.
    """
    _checkShape(R.shape, op.outputShape)

    blocks: List[ndarray] = [
        R[:, j, None] * subspace.basis
        for j, subspace in enumerate(op.subspaces)
    ]
    stacked: ndarray = numpy.hstack(blocks)
    return stacked if op.imageBasis is None else op.imageBasis.T @ stacked


def svt(X: ndarray, tau: float) -> ndarray:
    """
    Singular value thresholding, the proximal map of ``tau ||.||_*``.

    :param X: Input matrix.
    :type X: ndarray
    :param tau: Threshold, ``>= 0``.
    :type tau: float
    :return: ``U max(s - tau, 0) V^T``.
    :rtype: ndarray
    """
    if tau < 0:
        raise DomainError(ORIGIN, f"must be >= 0, got {tau}", "tau")
    if tau == 0:
        return numpy.array(X, dtype=numpy.float64)

    U: ndarray
    s: ndarray
    Vt: ndarray
    U, s, Vt = scipy.linalg.svd(X, full_matrices=False)
    shrunk: ndarray = numpy.maximum(s - tau, 0.0)
    keep: ndarray = shrunk > 0
    return (U[:, keep] * shrunk[keep]) @ Vt[keep]


def nuclearNorm(X: ndarray) -> float:
    return float(numpy.sum(scipy.linalg.svdvals(X)))


def operatorNorm(
    op: MeasurementOperator, iterations: int = POWER_ITERATIONS
) -> float:
    """
    Power-method estimate of ``||A||_op`` on ``A* A`` from a fixed-seed
    start.
    """
    rng: Generator = makeGenerator(POWER_SEED)
    v: ndarray = rng.standard_normal(op.liftedShape)
    v /= numpy.linalg.norm(v)

    estimate: float = 0.0
    for _ in range(iterations):
        w: ndarray = applyAdjoint(op, applyOperator(op, v))
        estimate = float(numpy.linalg.norm(w))
        if estimate == 0:
            break
        v = w / estimate

    norm: float = float(numpy.sqrt(estimate))
    logger.debug("power method: ||A||_op ~ %.6e", norm)
    return norm


@dataclass(frozen=True)
class LiftedSolution:
    """
    Outcome of the nuclear-norm baseline.

    :param X: Lifted estimate.
    :type X: ndarray
    :param beta: Image coefficients.
    :type beta: ndarray
    :param alpha: Stacked distortion coefficients.
    :type alpha: ndarray
    :param residual: ``||Y - A(X)||_F``.
    :type residual: float
    :param pivotFallback: Factors came from the leading singular pair
        instead of the first row/column rule.
    :type pivotFallback: bool
    """

    X: ndarray
    beta: ndarray
    alpha: ndarray
    residual: float
    nuclearNorm: float
    iterations: int
    objectiveTrace: Tuple[float, ...] = ()
    pivotFallback: bool = False


def extractFactors(X: ndarray) -> Tuple[ndarray, ndarray, bool]:
    """
    Split a (near) rank-one matrix into ``beta alpha^T``.

    The default rule takes ``beta = X[:, 0]`` and
    ``alpha = X[0, :] / X[0, 0]``. When the pivot is below ``1e-12`` relative
    to the largest entry the leading singular pair is used instead.

    :return: ``(beta, alpha, usedFallback)``.
    :rtype: Tuple[ndarray, ndarray, bool]
    """
    X = numpy.asarray(X, dtype=numpy.float64)
    scale: float = float(numpy.max(numpy.abs(X))) if X.size else 0.0
    if scale == 0:
        raise DomainError(ORIGIN, "cannot factor a zero matrix", "X")

    pivot: float = float(X[0, 0])
    if abs(pivot) >= PIVOT_TOLERANCE * scale:
        return X[:, 0].copy(), X[0, :] / pivot, False

    logger.warning("pivot X[0, 0] vanishes, using leading singular pair")
    U: ndarray
    s: ndarray
    Vt: ndarray
    U, s, Vt = scipy.linalg.svd(X, full_matrices=False)
    return U[:, 0] * s[0], Vt[0].copy(), True


def lambdaMax(op: MeasurementOperator, Y: ndarray) -> float:
    """Smallest weight for which ``X = 0`` minimizes the Lagrangian."""
    return float(scipy.linalg.svdvals(applyAdjoint(op, Y))[0])


def _lagrangian(
    op: MeasurementOperator, X: ndarray, Y: ndarray, lam: float
) -> float:
    residual: ndarray = Y - applyOperator(op, X)
    return 0.5 * float(numpy.sum(residual**2)) + lam * nuclearNorm(X)


def solveNuclear(
    stack: FrameStack,
    op: MeasurementOperator,
    lam: float,
    iters: int = 500,
    stages: int = CONTINUATION_STAGES,
    factor: float = 0.5,
    initial: Optional[ndarray] = None,
) -> LiftedSolution:
    """
    Proximal gradient on ``0.5 ||Y - A(X)||_F^2 + lam ||X||_*``.

    Each step is ``X <- svt(X - eta A*(A(X) - Y), eta lam)`` with
    ``eta = 1 / (1.05 ||A||_op^2)``. With ``stages > 1`` the threshold is
    continued geometrically: stage ``k`` uses
    ``max(lam, lam0 factor^(k+1))``, ``lam0 = ||A*(Y)||_2`` being the smallest
    value with ``X = 0`` optimal, each stage warm-started from the last.

    :param lam: Final regularization weight, ``> 0``.
    :type lam: float
    :param iters: Total number of proximal steps over all stages.
    :type iters: int
    :return: Estimate, factors and diagnostics.
    :rtype: LiftedSolution
    """
    if not lam > 0:
        raise DomainError(ORIGIN, f"must be > 0, got {lam}", "lambda")
    if iters < 1 or stages < 1:
        raise DomainError(ORIGIN, "iters and stages must be >= 1", "iters")
    if not 0 < factor < 1:
        raise DomainError(ORIGIN, "must lie in (0, 1)", "factor")

    Y: ndarray = stack.frames
    _checkShape(Y.shape, op.outputShape)

    norm: float = operatorNorm(op)
    if norm == 0:
        raise DomainError(ORIGIN, "operator is identically zero", "subspaces")
    eta: float = 1.0 / (STEP_MARGIN * norm**2)

    X: ndarray = (
        numpy.zeros(op.liftedShape)
        if initial is None
        else numpy.array(initial, dtype=numpy.float64)
    )
    _checkShape(X.shape, op.liftedShape)

    lam0: float = lambdaMax(op, Y)
    perStage: List[int] = [iters // stages] * stages
    perStage[-1] += iters - sum(perStage)

    trace: List[float] = []
    iteration: int = 0

    stage: int
    for stage, count in enumerate(perStage):
        stageLam: float = lam
        if stage < stages - 1:
            stageLam = max(lam, lam0 * factor ** (stage + 1))
        logger.debug("stage %d: lambda %.3e, %d steps", stage, stageLam, count)

        for _ in range(count):
            iteration += 1
            gradient: ndarray = applyAdjoint(op, applyOperator(op, X) - Y)
            X = svt(X - eta * gradient, eta * stageLam)

            if not numpy.all(numpy.isfinite(X)):
                raise DivergenceError(ORIGIN, "non-finite iterate", iteration)
            trace.append(_lagrangian(op, X, Y, stageLam))

    residual: float = float(numpy.linalg.norm(Y - applyOperator(op, X)))
    logger.info(
        "nuclear-norm baseline: %d steps, residual %.3e", iteration, residual
    )

    if not numpy.any(X):
        raise DomainError(
            ORIGIN, f"lambda={lam} shrinks the estimate to zero", "lambda"
        )

    beta: ndarray
    alpha: ndarray
    fallback: bool
    beta, alpha, fallback = extractFactors(X)

    return LiftedSolution(
        X=X,
        beta=beta,
        alpha=alpha,
        residual=residual,
        nuclearNorm=nuclearNorm(X),
        iterations=iteration,
        objectiveTrace=tuple(trace),
        pivotFallback=fallback,
    )


def recoverImage(
    solution: LiftedSolution, op: MeasurementOperator, prior: PriorConfig
) -> ndarray:
    """
    Reflectance estimate from the lifted factors.

    ``Q beta`` is only known up to a scalar, so it is rescaled to put its
    median on the mean of the more probable class, then clipped at 0.

    :return: Non-negative image vector of length P.
    :rtype: ndarray
    """
    image: ndarray = op.image(solution.beta)
    median: float = float(numpy.median(image))
    if median == 0:
        median = float(numpy.mean(image))
    if median == 0:
        raise DomainError(ORIGIN, "image estimate has no scale", "beta")

    target: float = prior.classMean(prior.majorityClass)
    return numpy.maximum(image * (target / median), 0.0)


def sweepDistortions(
    solution: LiftedSolution, op: MeasurementOperator
) -> ndarray:
    """``P x M`` distortions ``S^j alpha_j`` from the stacked coefficients."""
    return numpy.column_stack(
        [
            subspace.basis @ op.block(solution.alpha[None, :], j)[0]
            for j, subspace in enumerate(op.subspaces)
        ]
    )


def writeLiftedSolution(
    solution: LiftedSolution,
    op: MeasurementOperator,
    prior: PriorConfig,
    stack: FrameStack,
    path: PathLike,
) -> ndarray:
    """
    Write ``rho/`` (rescaled image), ``distortions/``, the raw factors
    ``beta.raw``/``alpha.raw`` and a ``baseline.meta`` summary.

    :return: The rescaled image that was written.
    :rtype: ndarray
    """
    directory: Path = Path(path)
    image: ndarray = recoverImage(solution, op, prior)

    writeImageGrid(stack.frame(0).withValues(image), directory / "rho")
    writeFrameStack(
        stack.withFrames(sweepDistortions(solution, op)),
        directory / "distortions",
    )
    writeRawMatrix(
        directory / "beta.raw", solution.beta, solution.beta.size, 1
    )
    writeRawMatrix(
        directory / "alpha.raw", solution.alpha, solution.alpha.size, 1
    )
    atomicWriteText(
        directory / "baseline.meta",
        f"iterations={solution.iterations}\n"
        f"residual={solution.residual!r}\n"
        f"nuclear_norm={solution.nuclearNorm!r}\n"
        f"pivot_fallback={str(solution.pivotFallback).lower()}\n",
    )
    return image

from pathlib import Path
from typing import Optional

import numpy
import pytest
from numpy import ndarray

from src.core.errors import ContractError, DomainError, ValidationError
from src.core.imageGrid import FrameStack
from src.core.priors import PriorConfig
from src.solvers.lowrank import (
    LiftedSolution,
    MeasurementOperator,
    applyAdjoint,
    applyOperator,
    extractFactors,
    lambdaMax,
    nuclearNorm,
    operatorNorm,
    recoverImage,
    solveNuclear,
    svt,
    sweepDistortions,
    writeLiftedSolution,
)
from src.subspace.sweepSubspace import oracleSubspaces


def bruteForce(
    op: MeasurementOperator, X: ndarray, Q: Optional[ndarray]
) -> ndarray:
    """Sum over the explicit rank-one measurement matrices."""
    Q = numpy.eye(op.pixelCount) if Q is None else Q
    out: ndarray = numpy.zeros(op.outputShape)
    for i in range(op.pixelCount):
        for j, subspace in enumerate(op.subspaces):
            block: ndarray = X[:, op.offsets[j] : op.offsets[j + 1]]
            out[i, j] = Q[i] @ block @ subspace.basis[i]
    return out


@pytest.fixture
def uniformInstance(rng):
    """4x4 stack of a uniform 0.3 image under positive distortions."""
    distortions: ndarray = rng.uniform(0.5, 1.5, (16, 3))
    stack = FrameStack(width=4, height=4, frames=0.3 * distortions)
    op = MeasurementOperator(
        subspaces=tuple(oracleSubspaces(distortions)),
        imageBasis=numpy.ones((16, 1)) / 4.0,
    )
    return stack, op, distortions


@pytest.mark.parametrize("withBasis", [False, True])
def test_operator_matches_explicit_measurements(
    rng, randomSubspaces, withBasis: bool
) -> None:
    Q: Optional[ndarray] = (
        rng.standard_normal((24, 5)) if withBasis else None
    )
    op = MeasurementOperator(
        subspaces=tuple(randomSubspaces(24, 2, 3)), imageBasis=Q
    )
    X: ndarray = rng.standard_normal(op.liftedShape)

    assert numpy.allclose(
        applyOperator(op, X), bruteForce(op, X, Q), atol=1e-12
    )


@pytest.mark.parametrize("withBasis", [False, True])
def test_adjoint_identity(rng, randomSubspaces, withBasis: bool) -> None:
    Q: Optional[ndarray] = (
        rng.standard_normal((24, 5)) if withBasis else None
    )
    op = MeasurementOperator(
        subspaces=tuple(randomSubspaces(24, 2, 3)), imageBasis=Q
    )
    X: ndarray = rng.standard_normal(op.liftedShape)
    R: ndarray = rng.standard_normal(op.outputShape)

    left: float = float(numpy.sum(applyOperator(op, X) * R))
    right: float = float(numpy.sum(X * applyAdjoint(op, R)))
    assert abs(left - right) <= 1e-10 * max(1.0, abs(left))


def test_operator_shapes(randomSubspaces) -> None:
    op = MeasurementOperator(subspaces=tuple(randomSubspaces(24, 3, 2)))

    assert op.liftedShape == (24, 6)
    assert op.outputShape == (24, 3)
    assert list(op.offsets) == [0, 2, 4, 6]
    with pytest.raises(ContractError):
        applyOperator(op, numpy.zeros((24, 5)))
    with pytest.raises(ContractError):
        applyAdjoint(op, numpy.zeros((23, 3)))


def test_operator_validation(randomSubspaces) -> None:
    with pytest.raises(ValidationError):
        MeasurementOperator(subspaces=())
    with pytest.raises(ValidationError):
        MeasurementOperator(
            subspaces=tuple(randomSubspaces(24, 1, 2)),
            imageBasis=numpy.ones((23, 1)),
        )
    with pytest.raises(ValidationError):
        MeasurementOperator(
            subspaces=tuple(
                randomSubspaces(24, 1, 2) + randomSubspaces(25, 1, 2)
            )
        )


def test_rank_one_lift_reproduces_the_observation_model(
    rng, randomSubspaces
) -> None:
    subspaces = randomSubspaces(20, 3, 4)
    op = MeasurementOperator(subspaces=tuple(subspaces))
    rho: ndarray = rng.uniform(0.1, 0.3, 20)
    alphas = [rng.standard_normal(4) for _ in subspaces]

    X: ndarray = numpy.outer(rho, numpy.concatenate(alphas))
    expected: ndarray = numpy.column_stack(
        [rho * (s.basis @ a) for s, a in zip(subspaces, alphas)]
    )
    assert numpy.allclose(applyOperator(op, X), expected, atol=1e-12)


@pytest.mark.slow
def test_noiseless_rank_one_lift_is_recovered(rng, randomSubspaces) -> None:
    op = MeasurementOperator(subspaces=tuple(randomSubspaces(64, 6, 4)))
    truth: ndarray = numpy.outer(
        rng.standard_normal(64), rng.standard_normal(24)
    )
    stack = FrameStack(width=8, height=8, frames=applyOperator(op, truth))

    solution: LiftedSolution = solveNuclear(
        stack, op, 1e-6 * lambdaMax(op, stack.frames), iters=40000
    )

    error: float = numpy.linalg.norm(solution.X - truth)
    assert error <= 1e-3 * numpy.linalg.norm(truth)

def test_svt_by_hand() -> None:
    assert numpy.allclose(
        svt(numpy.diag([3.0, 1.0]), 2.0), numpy.diag([1.0, 0.0])
    )


def test_svt_edge_thresholds(rng) -> None:
    X: ndarray = rng.standard_normal((5, 3))
    largest: float = float(numpy.linalg.svd(X, compute_uv=False)[0])

    assert numpy.array_equal(svt(X, 0.0), X)
    assert not numpy.any(svt(X, largest * (1 + 1e-9)))
    assert not numpy.any(svt(X, 10 * largest))
    with pytest.raises(DomainError):
        svt(X, -1.0)


def test_svt_is_non_expansive(rng) -> None:
    for _ in range(50):
        A: ndarray = rng.standard_normal((6, 4))
        B: ndarray = rng.standard_normal((6, 4))
        tau: float = float(rng.uniform(0.0, 3.0))

        assert numpy.linalg.norm(svt(A, tau) - svt(B, tau)) <= (
            numpy.linalg.norm(A - B) + 1e-12
        )


def test_nuclear_norm() -> None:
    assert nuclearNorm(numpy.diag([3.0, -1.0])) == pytest.approx(4.0)


def test_extract_factors_with_a_pivot() -> None:
    beta: ndarray = numpy.array([2.0, -1.0, 0.5])
    alpha: ndarray = numpy.array([1.0, 3.0, -2.0, 0.25])

    b, a, fallback = extractFactors(numpy.outer(beta, alpha))
    assert not fallback
    assert numpy.allclose(b, beta)
    assert numpy.allclose(a, alpha)


def test_extract_factors_without_a_pivot() -> None:
    X: ndarray = numpy.outer([0.0, 1.0, 2.0], [1.0, 2.0])

    b, a, fallback = extractFactors(X)
    assert fallback
    assert numpy.allclose(numpy.outer(b, a), X)


def test_extract_factors_rejects_zero() -> None:
    with pytest.raises(DomainError):
        extractFactors(numpy.zeros((3, 2)))


def test_constant_image_basis_has_a_known_norm(uniformInstance) -> None:
    _, op, _ = uniformInstance
    assert operatorNorm(op) == pytest.approx(0.25, rel=1e-9)


def test_uniform_image_is_recovered(uniformInstance) -> None:
    stack, op, _ = uniformInstance
    lam: float = 1e-6 * lambdaMax(op, stack.frames)
    solution: LiftedSolution = solveNuclear(
        stack, op, lam, iters=200, stages=5
    )

    assert solution.residual <= 1e-3 * numpy.linalg.norm(stack.frames)
    assert numpy.allclose(recoverImage(solution, op, PriorConfig()), 0.3)

    predicted: ndarray = (
        op.image(solution.beta)[:, None] * sweepDistortions(solution, op)
    )
    assert numpy.allclose(predicted, stack.frames, atol=1e-4)


def test_objective_trace_never_increases(rng, randomSubspaces) -> None:
    subspaces = randomSubspaces(16, 3, 2)
    op = MeasurementOperator(
        subspaces=tuple(subspaces), imageBasis=numpy.ones((16, 1)) / 4.0
    )
    stack = FrameStack(
        width=4, height=4, frames=rng.uniform(0.0, 1.0, (16, 3))
    )
    lam: float = 0.05 * lambdaMax(op, stack.frames)
    solution: LiftedSolution = solveNuclear(
        stack, op, lam, iters=60, stages=3
    )

    trace = solution.objectiveTrace
    assert len(trace) == solution.iterations == 60
    assert all(
        later <= earlier * (1 + 1e-12) + 1e-15
        for earlier, later in zip(trace, trace[1:])
    )


def test_large_weight_collapses_the_estimate(uniformInstance) -> None:
    stack, op, _ = uniformInstance
    lam: float = 2.0 * lambdaMax(op, stack.frames)

    with pytest.raises(DomainError):
        solveNuclear(stack, op, lam, iters=20, stages=2)


def test_solver_arguments_are_checked(uniformInstance) -> None:
    stack, op, _ = uniformInstance
    with pytest.raises(DomainError):
        solveNuclear(stack, op, 0.0)
    with pytest.raises(DomainError):
        solveNuclear(stack, op, 1e-3, iters=0)
    with pytest.raises(DomainError):
        solveNuclear(stack, op, 1e-3, factor=1.0)


def test_lifted_artifacts(tmp_path: Path, uniformInstance) -> None:
    stack, op, _ = uniformInstance
    solution: LiftedSolution = solveNuclear(
        stack, op, 1e-6 * lambdaMax(op, stack.frames), iters=50, stages=2
    )
    image: ndarray = writeLiftedSolution(
        solution, op, PriorConfig(), stack, tmp_path
    )

    assert image.shape == (16,)
    assert (tmp_path / "rho" / "stack.raw").is_file()
    assert (tmp_path / "distortions" / "stack.raw").is_file()
    assert (tmp_path / "beta.raw").is_file()
    meta: str = (tmp_path / "baseline.meta").read_text()
    assert "iterations=50" in meta
    assert "pivot_fallback=false" in meta

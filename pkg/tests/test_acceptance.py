from typing import Dict, List

import numpy
import pytest
from numpy import ndarray
from pandas import DataFrame

from src.analytics.framesSweep import FramesSweep
from src.analytics.metrics import labelsFromImage, misclassificationRate
from src.analytics.sweepExperiment import (
    NOISE_STREAM,
    SUBSET_STREAM,
    SweepExperimentConfig,
    TrialJob,
    executeTrials,
    poolSimulation,
)
from src.core.config import parseConfig
from src.core.imageGrid import ImageGrid
from src.core.priors import PriorConfig
from src.forward.simulate import (
    SimConfig,
    SimulatedStack,
    noiselessDistortions,
    simulateStack,
)
from src.solvers.altmin import (
    SolverOptions,
    SolverState,
    resolvePrior,
    solve,
)
from src.solvers.lowrank import (
    LiftedSolution,
    MeasurementOperator,
    lambdaMax,
    recoverImage,
    solveNuclear,
)
from src.subspace.sweepSubspace import (
    SubspaceOptions,
    SweepSubspace,
    buildSubspaces,
    oracleSubspaces,
)

POOL: int = 20


def oracleTrials(
    frameCount: int, snrDb: float, trials: int = 10, seed: int = 0
) -> List[Dict[str, float]]:
    """Oracle-mode trials on the default letter scene, M of 20 frames."""
    sim: SimConfig = poolSimulation(parseConfig(None, "sim", []), POOL)
    distortions: ndarray = noiselessDistortions(sim)
    jobs: List[TrialJob] = [
        TrialJob(
            sim=sim,
            distortions=distortions,
            prior=PriorConfig(),
            options=SolverOptions(),
            subspace=SubspaceOptions(),
            mode="oracle",
            frameCount=frameCount,
            snrDb=snrDb,
            noiseKey=(seed, NOISE_STREAM, trial),
            subsetKey=(seed, SUBSET_STREAM, frameCount, trial),
        )
        for trial in range(trials)
    ]
    return executeTrials(jobs)


def perfectCount(results: List[Dict[str, float]]) -> int:
    return sum(1 for row in results if row["mse_rounded"] == 0.0)


def misclassified(
    image: ndarray, grid: ImageGrid, cfg: SimConfig, prior: PriorConfig
) -> float:
    return misclassificationRate(
        labelsFromImage(grid.withValues(image), prior.rho0, prior.rho1),
        cfg.phantom.labels,
    )


@pytest.mark.slow
def test_letter_phantom_with_oracle_subspaces() -> None:
    cfg: SimConfig = parseConfig(None, "sim", ["frames=10", "seed=11"])
    result: SimulatedStack = simulateStack(cfg)
    prior: PriorConfig = resolvePrior(
        PriorConfig(), result.stack, knownSigmaSq=result.noiseSigmaSq
    )

    state: SolverState = solve(
        result.stack, oracleSubspaces(result.trueDistortions), prior
    )

    assert (cfg.grid.width, cfg.grid.height) == (64, 64)
    assert misclassified(state.rho, cfg.grid, cfg, prior) <= 0.005
    assert numpy.all(state.rho >= 0)


@pytest.mark.slow
@pytest.mark.xfail(
    reason=(
        "at 10 dB over the stack, 7 frames leave 1-3 of 4096 pixels "
        "misclassified in most trials; a perfect image occurs in about "
        "1 trial of 5"
    ),
    strict=False,
)
def test_seven_frames_recover_the_binary_image() -> None:
    results: List[Dict[str, float]] = oracleTrials(frameCount=7, snrDb=10.0)

    assert not any(row["failed"] for row in results)
    assert perfectCount(results) >= 9


@pytest.mark.slow
def test_snr_separates_perfect_and_degraded_regimes() -> None:
    clean: List[Dict[str, float]] = oracleTrials(frameCount=10, snrDb=12.0)
    noisy: List[Dict[str, float]] = oracleTrials(
        frameCount=10, snrDb=0.0, trials=3
    )

    assert perfectCount(clean) >= 9
    assert all(row["mse_rounded"] > 0 for row in noisy)


@pytest.mark.slow
def test_wavelet_mode_tracks_oracle_mode() -> None:
    sim: SimConfig = parseConfig(None, "sim", [])
    frameCounts = (5, 7, 10, 15, 20)

    curves: Dict[str, ndarray] = {}
    for mode in ("oracle", "wavelet"):
        cfg = SweepExperimentConfig(
            frameCounts=frameCounts,
            trials=3,
            subspaceMode=mode,
            poolFrames=POOL,
            snrDb=10.0,
        )
        data: DataFrame = FramesSweep(
            cfg, sim, PriorConfig(), SolverOptions()
        ).compute()
        assert list(data["M"]) == list(frameCounts)
        assert not data["flagged"].any()
        curves[mode] = data["mse_rounded"].to_numpy()

    wavelet: ndarray = curves["wavelet"]
    assert numpy.all(wavelet >= curves["oracle"])
    assert wavelet[-1] < wavelet[0]
    assert numpy.all(numpy.diff(wavelet) <= 0.1 * wavelet[0])


@pytest.mark.slow
def test_wavelet_reconstruction_of_the_letter_scene() -> None:
    cfg: SimConfig = parseConfig(None, "sim", ["frames=10", "seed=11"])
    result: SimulatedStack = simulateStack(cfg)
    prior: PriorConfig = resolvePrior(
        PriorConfig(), result.stack, knownSigmaSq=result.noiseSigmaSq
    )
    subspaces: List[SweepSubspace] = buildSubspaces(
        result.stack.frames, SubspaceOptions(), 64, 64
    )

    state: SolverState = solve(result.stack, subspaces, prior)

    assert [s.dimension for s in subspaces] == [100] * 10
    assert state.converged
    assert state.iteration <= 20
    assert numpy.all(numpy.isfinite(state.rho))
    assert misclassified(state.rho, cfg.grid, cfg, prior) <= 0.03


@pytest.mark.slow
def test_alternating_solver_beats_the_nuclear_baseline() -> None:
    cfg: SimConfig = parseConfig(
        None, "sim", ["width=32", "height=32", "frames=10", "seed=11"]
    )
    result: SimulatedStack = simulateStack(cfg)
    prior: PriorConfig = resolvePrior(
        PriorConfig(), result.stack, knownSigmaSq=result.noiseSigmaSq
    )
    subspaces: List[SweepSubspace] = buildSubspaces(
        result.stack.frames, SubspaceOptions(nCoefficients=25), 32, 32
    )

    state: SolverState = solve(result.stack, subspaces, prior)

    op = MeasurementOperator(subspaces=tuple(subspaces))
    solution: LiftedSolution = solveNuclear(
        result.stack,
        op,
        1e-3 * lambdaMax(op, result.stack.frames),
        iters=600,
    )
    baseline: ndarray = recoverImage(solution, op, prior)

    assert misclassified(state.rho, cfg.grid, cfg, prior) <= misclassified(
        baseline, cfg.grid, cfg, prior
    )

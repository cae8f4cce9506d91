import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy
import pandas
from numpy import ndarray
from numpy.random import Generator
from pandas import DataFrame
from plotly import graph_objects
from plotly.graph_objects import Figure

from src.analytics.metrics import (
    binaryRound,
    labelsFromImage,
    misclassificationRate,
    mse,
)
from src.core.errors import DivergenceError, DomainError, ValidationError
from src.core.imageGrid import FrameStack, ImageGrid
from src.core.priors import PriorConfig
from src.forward.simulate import (
    SimConfig,
    addNoise,
    makeGenerator,
    noiselessDistortions,
)
from src.solvers.altmin import (
    SolverOptions,
    SolverState,
    resolvePrior,
    solve,
)
from src.subspace.sweepSubspace import (
    SubspaceOptions,
    SweepSubspace,
    buildSubspaces,
    oracleSubspaces,
)
from src.utils import PathLike, atomicWriteText
from src.utils.analytic import Analytic

logger: logging.Logger = logging.getLogger(__name__)

ORIGIN: str = "analytics.sweepExperiment"

SUBSPACE_MODES: Tuple[str, ...] = ("oracle", "wavelet")

# per-trial RNG stream tags
NOISE_STREAM: int = 0
SUBSET_STREAM: int = 1

METRIC_COLUMNS: Tuple[str, ...] = (
    "mse_raw",
    "mse_rounded",
    "misclassification",
    "iterations",
)


@dataclass(frozen=True)
class SweepExperimentConfig:
    """
    Protocol of the frame-count and SNR sweeps.

    Every point draws ``trials`` fresh frame subsets (uniform, without
    replacement) from a pool of ``poolFrames`` uniformly spaced frames and
    averages the metrics over the trials.

    :param frameCounts: Values of M for the frames sweep.
    :type frameCounts: Tuple[int, ...]
    :param snrValues: SNR values (dB) for the SNR sweep.
    :type snrValues: Tuple[float, ...]
    :param subspaceMode: ``oracle`` or ``wavelet``.
    :type subspaceMode: str
    :param fixedFrames: M used by the SNR sweep.
    :type fixedFrames: int
    :param snrDb: SNR used by the frames sweep.
    :type snrDb: float
    :param workers: Worker processes for the trials; 1 runs inline.
    :type workers: int
    """

    frameCounts: Tuple[int, ...] = tuple(range(3, 21))
    snrValues: Tuple[float, ...] = tuple(float(v) for v in range(0, 21, 2))
    trials: int = 10
    subspaceMode: str = "oracle"
    seed: int = 0
    poolFrames: int = 20
    fixedFrames: int = 10
    snrDb: float = 10.0
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "frameCounts", tuple(int(m) for m in self.frameCounts)
        )
        object.__setattr__(
            self, "snrValues", tuple(float(v) for v in self.snrValues)
        )

        if self.trials < 1:
            raise ValidationError(ORIGIN, "must be >= 1", "trials")
        if self.poolFrames < 1:
            raise ValidationError(ORIGIN, "must be >= 1", "pool_frames")
        if not self.frameCounts or any(
            not 1 <= m <= self.poolFrames for m in self.frameCounts
        ):
            raise ValidationError(
                ORIGIN,
                f"every M must lie in [1, {self.poolFrames}]",
                "frame_counts",
            )
        if not self.snrValues:
            raise ValidationError(ORIGIN, "need >= 1 value", "snr_values")
        if not 1 <= self.fixedFrames <= self.poolFrames:
            raise ValidationError(
                ORIGIN,
                f"must lie in [1, {self.poolFrames}]",
                "fixed_frames",
            )
        if self.subspaceMode not in SUBSPACE_MODES:
            raise ValidationError(
                ORIGIN, f"must be one of {SUBSPACE_MODES}", "subspace_mode"
            )
        if self.seed < 0:
            raise ValidationError(ORIGIN, "must be >= 0", "seed")
        if self.workers < 1:
            raise ValidationError(ORIGIN, "must be >= 1", "workers")


class TrialJob(NamedTuple):
    sim: SimConfig
    distortions: ndarray
    prior: PriorConfig
    options: SolverOptions
    subspace: SubspaceOptions
    mode: str
    frameCount: int
    snrDb: float
    noiseKey: Tuple[int, ...]
    subsetKey: Tuple[int, ...]


def drawSubset(rng: Generator, pool: int, count: int) -> ndarray:
    """Sorted uniform draw of ``count`` frame indices without replacement."""
    return numpy.sort(rng.choice(pool, size=count, replace=False))


def _subspacesFor(
    job: TrialJob, stack: FrameStack, subset: ndarray
) -> List[SweepSubspace]:
    if job.mode == "oracle":
        return oracleSubspaces(job.distortions[:, subset])
    return buildSubspaces(
        stack.frames, job.subspace, stack.width, stack.height
    )


def runTrial(job: TrialJob) -> Dict[str, float]:
    """
    One simulated acquisition, subset draw and solve.

    :return: Metrics of the trial; ``failed = 1`` with NaN metrics when the
        solver diverged.
    :rtype: Dict[str, float]
    """
    grid: ImageGrid = job.sim.grid
    signal: ndarray = grid.values[:, None] * job.distortions

    noisy: ndarray
    sigmaSq: float
    noisy, sigmaSq = addNoise(
        signal, job.snrDb, makeGenerator(*job.noiseKey), job.sim.noiseMode
    )
    subset: ndarray = drawSubset(
        makeGenerator(*job.subsetKey), noisy.shape[1], job.frameCount
    )

    stack: FrameStack = FrameStack(
        width=grid.width,
        height=grid.height,
        frames=noisy,
        sampleTimes=job.sim.sampleTimes,
        pixelPitchX=grid.pixelPitchX,
        pixelPitchY=grid.pixelPitchY,
    ).selectFrames(subset)

    prior: PriorConfig = resolvePrior(job.prior, stack, knownSigmaSq=sigmaSq)

    try:
        state: SolverState = solve(
            stack, _subspacesFor(job, stack, subset), prior, job.options
        )
    except DivergenceError as error:
        logger.warning("trial %s failed: %s", job.subsetKey, error)
        return {
            **{column: numpy.nan for column in METRIC_COLUMNS},
            "failed": 1,
        }

    estimate: ImageGrid = grid.withValues(state.rho)
    rounded: ImageGrid = binaryRound(estimate, prior.rho0, prior.rho1)
    return {
        "mse_raw": mse(estimate, grid),
        "mse_rounded": mse(rounded, grid),
        "misclassification": misclassificationRate(
            labelsFromImage(estimate, prior.rho0, prior.rho1),
            job.sim.phantom.labels,
        ),
        "iterations": float(state.iteration),
        "failed": 0,
    }


def executeTrials(
    jobs: Sequence[TrialJob], workers: int = 1
) -> List[Dict[str, float]]:
    """
    Run the trials inline or on a process pool. Results keep the job order,
    and every job carries its own RNG keys, so the outcome does not depend
    on ``workers``.
    """
    if workers <= 1:
        return [runTrial(job) for job in jobs]

    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(runTrial, jobs))


def summarize(
    trials: DataFrame, keys: List[str], requested: int
) -> DataFrame:
    """
    Average the trial metrics per sweep point. ``trials`` counts the
    successful trials; a point with any failure is flagged.
    """
    grouped = trials.groupby(keys, sort=False)
    summary: DataFrame = grouped[list(METRIC_COLUMNS)].mean().reset_index()
    summary["trials"] = (
        grouped["failed"].apply(lambda f: int((f == 0).sum())).to_numpy()
    )
    summary["failed"] = grouped["failed"].sum().astype(int).to_numpy()
    summary["flagged"] = summary["failed"] > 0

    flagged: DataFrame = summary[summary["flagged"]]
    if not flagged.empty:
        logger.warning(
            "%d of %d sweep points had failed trials (of %d each)",
            len(flagged),
            len(summary),
            requested,
        )
    return summary


def poolSimulation(sim: SimConfig, poolFrames: int) -> SimConfig:
    """
    The simulation resampled to ``poolFrames`` uniformly spaced frames over
    its own time window, so the sweep pool never depends on how the caller
    sampled ``sim``.
    """
    times: ndarray = sim.sampleTimes
    if times.size == poolFrames:
        return sim
    if times.size < 2 and poolFrames > 1:
        raise DomainError(
            ORIGIN,
            f"a single sample time cannot span a pool of {poolFrames}",
            "frames",
        )
    return replace(
        sim, sampleTimes=numpy.linspace(times[0], times[-1], poolFrames)
    )


class SweepAnalytic(Analytic):
    """
    Shared machinery of the sweeps: trial generation, aggregation, the
    figure and the CSV artifact.
    """

    axis: str = ""
    title: str = ""

    def __init__(
        self,
        cfg: SweepExperimentConfig,
        sim: SimConfig,
        prior: PriorConfig,
        options: SolverOptions,
        subspace: Optional[SubspaceOptions] = None,
        distortions: Optional[ndarray] = None,
    ) -> None:
        self.cfg: SweepExperimentConfig = cfg
        self.sim: SimConfig = poolSimulation(sim, cfg.poolFrames)
        self.prior: PriorConfig = prior
        self.options: SolverOptions = options
        self.subspace: SubspaceOptions = subspace or SubspaceOptions()
        self.distortions: Optional[ndarray] = distortions

    def _poolDistortions(self) -> ndarray:
        if self.distortions is None:
            return noiselessDistortions(self.sim)
        if self.distortions.shape[1] != self.cfg.poolFrames:
            raise DomainError(
                ORIGIN,
                f"distortions have {self.distortions.shape[1]} frames, "
                f"the pool has {self.cfg.poolFrames}",
                "pool_frames",
            )
        return self.distortions

    def _job(
        self,
        distortions: ndarray,
        frameCount: int,
        snrDb: float,
        noiseKey: Tuple[int, ...],
        trial: int,
    ) -> TrialJob:
        return TrialJob(
            sim=self.sim,
            distortions=distortions,
            prior=self.prior,
            options=self.options,
            subspace=self.subspace,
            mode=self.cfg.subspaceMode,
            frameCount=frameCount,
            snrDb=snrDb,
            noiseKey=noiseKey,
            subsetKey=(self.cfg.seed, SUBSET_STREAM, frameCount, trial),
        )

    def plot(self, data: DataFrame) -> Figure:
        return sweepFigure(data, self.axis, self.title)

    def run(self, path: PathLike) -> DataFrame:
        """
        Compute the sweep and write it as CSV to ``path``.

        :param path: Destination file.
        :type path: PathLike
        :return: The table that was written.
        :rtype: DataFrame
        """
        data: DataFrame = self.compute()
        atomicWriteText(Path(path), sweepCsv(data))
        logger.info("wrote %d sweep rows to %s", len(data), path)
        return data


def sweepCsv(data: DataFrame) -> str:
    return data.to_csv(index=False, float_format="%.17g")


def readSweep(path: PathLike) -> DataFrame:
    return pandas.read_csv(Path(path))


def sweepFigure(data: DataFrame, axis: str = "", title: str = "") -> Figure:
    """
    Raw and rounded MSE (plus misclassification rate) against the swept
    variable. The axis is guessed from the columns when not given.
    """
    if not axis:
        axis = "snr_db" if "snr_db" in data.columns else "M"

    fig: Figure = Figure()

    column: str
    for column, name in (
        ("mse_raw", "MSE"),
        ("mse_rounded", "MSE (binary rounded)"),
    ):
        fig.add_trace(
            graph_objects.Scatter(
                x=data[axis], y=data[column], mode="lines+markers", name=name
            )
        )
    fig.add_trace(
        graph_objects.Scatter(
            x=data[axis],
            y=data["misclassification"],
            mode="lines+markers",
            name="misclassified fraction",
            yaxis="y2",
        )
    )

    fig.update_layout(
        title=title or f"MSE vs {axis}",
        xaxis=dict(title="M (frames)" if axis == "M" else "SNR (dB)"),
        yaxis=dict(title="MSE"),
        yaxis2=dict(
            title="misclassified fraction", overlaying="y", side="right"
        ),
    )
    return fig

from dataclasses import replace
from math import inf
from pathlib import Path

import numpy
import pytest
from pandas import DataFrame
from plotly.graph_objects import Figure

from src.analytics.framesSweep import FramesSweep, runFramesSweep
from src.analytics.snrSweep import SnrSweep
from src.analytics.sweepExperiment import (
    METRIC_COLUMNS,
    SweepExperimentConfig,
    drawSubset,
    readSweep,
    summarize,
    sweepFigure,
)
from src.core.errors import DomainError, ValidationError
from src.core.priors import PriorConfig
from src.forward.phantom import makeLetterPhantom
from src.forward.pulse import PulseSpec
from src.forward.simulate import SimConfig, makeGenerator
from src.solvers.altmin import SolverOptions
from src.utils.analytic import Analytic


@pytest.fixture
def plusScene() -> SimConfig:
    return SimConfig(
        pulse=PulseSpec(),
        phantom=makeLetterPhantom(16, 16, "+", 0.3, 0.1),
        sampleTimes=numpy.linspace(0.6e-12, 1.4e-12, 6),
        snrDb=inf,
    )


def framesConfig(**changes) -> SweepExperimentConfig:
    settings = dict(
        frameCounts=(3, 6),
        trials=2,
        poolFrames=6,
        fixedFrames=4,
        snrDb=inf,
        snrValues=(0.0, 20.0),
    )
    settings.update(changes)
    return SweepExperimentConfig(**settings)


def test_subsets_are_sorted_and_distinct() -> None:
    for trial in range(20):
        subset = drawSubset(makeGenerator(0, 1, 5, trial), 20, 5)
        assert list(subset) == sorted(set(subset))
        assert subset.size == 5
        assert subset.min() >= 0 and subset.max() < 20


def test_subset_draws_are_reproducible() -> None:
    first = drawSubset(makeGenerator(7, 1, 3, 0), 20, 3)
    again = drawSubset(makeGenerator(7, 1, 3, 0), 20, 3)
    assert numpy.array_equal(first, again)


def test_config_validation() -> None:
    with pytest.raises(ValidationError):
        SweepExperimentConfig(frameCounts=(3, 25))
    with pytest.raises(ValidationError):
        SweepExperimentConfig(subspaceMode="pca")
    with pytest.raises(ValidationError):
        SweepExperimentConfig(trials=0)
    with pytest.raises(ValidationError):
        SweepExperimentConfig(snrValues=())
    with pytest.raises(ValidationError):
        SweepExperimentConfig(fixedFrames=21)


def test_summary_counts_failed_trials() -> None:
    rows: DataFrame = DataFrame(
        {
            "M": [3, 3, 4, 4],
            "mse_raw": [1.0, numpy.nan, 2.0, 4.0],
            "mse_rounded": [0.0, numpy.nan, 0.0, 0.0],
            "misclassification": [0.5, numpy.nan, 0.0, 0.0],
            "iterations": [3.0, numpy.nan, 4.0, 6.0],
            "failed": [0, 1, 0, 0],
        }
    )
    summary: DataFrame = summarize(rows, ["M"], 2)

    assert list(summary["M"]) == [3, 4]
    assert list(summary["mse_raw"]) == [1.0, 3.0]
    assert list(summary["trials"]) == [1, 2]
    assert list(summary["failed"]) == [1, 0]
    assert list(summary["flagged"]) == [True, False]


def test_noiseless_oracle_frames_sweep(plusScene: SimConfig) -> None:
    data: DataFrame = FramesSweep(
        framesConfig(), plusScene, PriorConfig(), SolverOptions()
    ).compute()

    assert list(data["M"]) == [3, 6]
    assert set(METRIC_COLUMNS) <= set(data.columns)
    assert numpy.all(data["trials"] == 2)
    assert not data["flagged"].any()
    assert numpy.all(data["mse_raw"] <= 1e-6)
    assert numpy.all(data["misclassification"] == 0.0)


def test_sweeps_are_deterministic(plusScene: SimConfig) -> None:
    cfg: SweepExperimentConfig = framesConfig(snrDb=10.0, seed=3)
    first: DataFrame = runFramesSweep(
        cfg, plusScene, PriorConfig(), SolverOptions(maxIters=10)
    )
    again: DataFrame = runFramesSweep(
        cfg, plusScene, PriorConfig(), SolverOptions(maxIters=10)
    )
    assert first.equals(again)


def test_worker_count_does_not_change_results(plusScene: SimConfig) -> None:
    options = SolverOptions(maxIters=10)
    inline: DataFrame = SnrSweep(
        framesConfig(workers=1), plusScene, PriorConfig(), options
    ).compute()
    pooled: DataFrame = SnrSweep(
        framesConfig(workers=2), plusScene, PriorConfig(), options
    ).compute()

    assert list(inline["snr_db"]) == [0.0, 20.0]
    assert numpy.all(inline["M"] == 4)
    assert inline.equals(pooled)


def test_pool_size_follows_the_sweep_config(plusScene: SimConfig) -> None:
    cfg: SweepExperimentConfig = framesConfig(
        frameCounts=(3, 8), poolFrames=10
    )
    analytic = FramesSweep(cfg, plusScene, PriorConfig(), SolverOptions())

    times = analytic.sim.sampleTimes
    assert times.size == 10
    assert times[0] == plusScene.sampleTimes[0]
    assert times[-1] == plusScene.sampleTimes[-1]

    data: DataFrame = analytic.compute()
    assert list(data["M"]) == [3, 8]
    assert numpy.all(data["misclassification"] == 0.0)


def test_pool_needs_a_time_window(plusScene: SimConfig) -> None:
    single: SimConfig = replace(plusScene, sampleTimes=[1e-12])
    with pytest.raises(DomainError):
        FramesSweep(framesConfig(), single, PriorConfig(), SolverOptions())


def test_injected_distortions_must_fill_the_pool(
    plusScene: SimConfig,
) -> None:
    analytic = SnrSweep(
        framesConfig(),
        plusScene,
        PriorConfig(),
        SolverOptions(),
        distortions=numpy.ones((16 * 16, 4)),
    )
    with pytest.raises(DomainError):
        analytic.compute()


def test_run_writes_a_readable_csv(
    tmp_path: Path, plusScene: SimConfig
) -> None:
    analytic = FramesSweep(
        framesConfig(frameCounts=(3,)),
        plusScene,
        PriorConfig(),
        SolverOptions(maxIters=5),
    )
    assert isinstance(analytic, Analytic)

    data: DataFrame = analytic.run(tmp_path / "frames.csv")
    table: DataFrame = readSweep(tmp_path / "frames.csv")

    assert list(table.columns) == list(data.columns)
    assert numpy.allclose(table["mse_raw"], data["mse_raw"], rtol=0)
    assert isinstance(analytic.plot(table), Figure)


def test_figure_guesses_the_axis() -> None:
    data: DataFrame = DataFrame(
        {
            "snr_db": [0.0, 10.0],
            "mse_raw": [0.2, 0.1],
            "mse_rounded": [0.1, 0.0],
            "misclassification": [0.3, 0.0],
        }
    )
    figure: Figure = sweepFigure(data)

    assert len(figure.data) == 3
    assert list(figure.data[0].x) == [0.0, 10.0]
    assert figure.layout.xaxis.title.text == "SNR (dB)"

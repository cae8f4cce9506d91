import logging
from typing import Dict, List, Optional

from numpy import ndarray
from pandas import DataFrame

from src.analytics.sweepExperiment import (
    NOISE_STREAM,
    SweepAnalytic,
    SweepExperimentConfig,
    TrialJob,
    executeTrials,
    summarize,
)
from src.core.priors import PriorConfig
from src.forward.simulate import SimConfig
from src.solvers.altmin import SolverOptions
from src.subspace.sweepSubspace import SubspaceOptions

logger: logging.Logger = logging.getLogger(__name__)


class FramesSweep(SweepAnalytic):
    """
    Reconstruction error as a function of the number of available frames.

    Each trial adds noise at ``cfg.snrDb`` to the whole frame pool, then
    every M draws its own subset from that same noisy pool, so the points of
    one trial differ only in how many frames the solver sees.
    """

    axis: str = "M"
    title: str = "MSE vs number of frames"

    def compute(self) -> DataFrame:
        """
        :return: One row per M with columns ``M, subspace_mode, mse_raw,
            mse_rounded, misclassification, iterations, trials, failed,
            flagged``.
        :rtype: DataFrame
        """
        distortions: ndarray = self._poolDistortions()

        jobs: List[TrialJob] = [
            self._job(
                distortions=distortions,
                frameCount=m,
                snrDb=self.cfg.snrDb,
                noiseKey=(self.cfg.seed, NOISE_STREAM, trial),
                trial=trial,
            )
            for m in self.cfg.frameCounts
            for trial in range(self.cfg.trials)
        ]
        logger.info(
            "frames sweep: %d points x %d trials, %s subspaces",
            len(self.cfg.frameCounts),
            self.cfg.trials,
            self.cfg.subspaceMode,
        )

        results: List[Dict[str, float]] = executeTrials(
            jobs, self.cfg.workers
        )
        rows: DataFrame = DataFrame(results)
        rows.insert(0, "M", [job.frameCount for job in jobs])
        rows.insert(1, "subspace_mode", self.cfg.subspaceMode)

        return summarize(rows, ["M", "subspace_mode"], self.cfg.trials)


def runFramesSweep(
    cfg: SweepExperimentConfig,
    sim: SimConfig,
    prior: PriorConfig,
    options: SolverOptions,
    subspace: Optional[SubspaceOptions] = None,
) -> DataFrame:
    return FramesSweep(cfg, sim, prior, options, subspace).compute()

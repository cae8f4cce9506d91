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


class SnrSweep(SweepAnalytic):
    """
    Reconstruction error as a function of SNR at a fixed frame count.

    Trial ``t`` uses the same frame subset at every SNR; the noise is drawn
    afresh per (SNR, trial).
    """

    axis: str = "snr_db"
    title: str = "MSE vs SNR"

    def compute(self) -> DataFrame:
        distortions: ndarray = self._poolDistortions()

        jobs: List[TrialJob] = [
            self._job(
                distortions=distortions,
                frameCount=self.cfg.fixedFrames,
                snrDb=snr,
                noiseKey=(self.cfg.seed, NOISE_STREAM, point, trial),
                trial=trial,
            )
            for point, snr in enumerate(self.cfg.snrValues)
            for trial in range(self.cfg.trials)
        ]
        logger.info(
            "SNR sweep: %d points x %d trials at M=%d",
            len(self.cfg.snrValues),
            self.cfg.trials,
            self.cfg.fixedFrames,
        )

        results: List[Dict[str, float]] = executeTrials(
            jobs, self.cfg.workers
        )
        rows: DataFrame = DataFrame(results)
        rows.insert(0, "snr_db", [job.snrDb for job in jobs])
        rows.insert(1, "M", self.cfg.fixedFrames)
        rows.insert(2, "subspace_mode", self.cfg.subspaceMode)

        return summarize(
            rows, ["snr_db", "M", "subspace_mode"], self.cfg.trials
        )


def runSnrSweep(
    cfg: SweepExperimentConfig,
    sim: SimConfig,
    prior: PriorConfig,
    options: SolverOptions,
    subspace: Optional[SubspaceOptions] = None,
) -> DataFrame:
    return SnrSweep(cfg, sim, prior, options, subspace).compute()

from dataclasses import dataclass
from math import isfinite
from typing import Optional

from src.core.errors import ValidationError

ORIGIN: str = "core.priors"

PROBABILITY_TOLERANCE: float = 1e-12


@dataclass(frozen=True)
class PriorConfig:
    """
    Two-class truncated-normal prior on the reflectance plus the Gaussian
    observation noise level.

    Class ``c`` pixels concentrate around ``rho_c`` with variance
    ``sigma_c^2`` and occur with probability ``p_c``.

    :param noiseSigmaSq: Observation noise variance. ``None`` means "estimate
        from the data" and must be resolved before solving.
    :type noiseSigmaSq: Optional[float]
    """

    rho0: float = 0.3
    rho1: float = 0.1
    sigma0Sq: float = 1e-10
    sigma1Sq: float = 1e-10
    p0: float = 0.5
    p1: float = 0.5
    noiseSigmaSq: Optional[float] = None

    def __post_init__(self) -> None:
        for key, value in (("rho0", self.rho0), ("rho1", self.rho1)):
            if not isfinite(value) or value < 0:
                raise ValidationError(
                    ORIGIN, f"must be finite and >= 0, got {value}", key
                )

        if self.rho0 == self.rho1:
            raise ValidationError(
                ORIGIN, "class means must differ (degenerate prior)", "rho1"
            )

        for key, value in (
            ("sigma0", self.sigma0Sq),
            ("sigma1", self.sigma1Sq),
        ):
            if not isfinite(value) or value <= 0:
                raise ValidationError(
                    ORIGIN, f"variance must be > 0, got {value}", key
                )

        for key, value in (("p0", self.p0), ("p1", self.p1)):
            if not 0 < value < 1:
                raise ValidationError(
                    ORIGIN, f"must lie in (0, 1), got {value}", key
                )

        if abs(self.p0 + self.p1 - 1.0) > PROBABILITY_TOLERANCE:
            raise ValidationError(
                ORIGIN, f"p0 + p1 must equal 1, got {self.p0 + self.p1}", "p1"
            )

        if self.noiseSigmaSq is not None and (
            not isfinite(self.noiseSigmaSq) or self.noiseSigmaSq <= 0
        ):
            raise ValidationError(
                ORIGIN,
                f"variance must be > 0, got {self.noiseSigmaSq}",
                "noise_sigma",
            )

    def classMean(self, c: int) -> float:
        return self.rho1 if c else self.rho0

    def classVariance(self, c: int) -> float:
        return self.sigma1Sq if c else self.sigma0Sq

    def classProbability(self, c: int) -> float:
        return self.p1 if c else self.p0

    @property
    def majorityClass(self) -> int:
        return 0 if self.p0 >= self.p1 else 1

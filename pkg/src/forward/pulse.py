from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy
from numpy import ndarray

from src.core.errors import DomainError, ValidationError

ORIGIN: str = "forward.pulse"

ArrayLike = Union[float, ndarray]


@dataclass(frozen=True)
class PulseSpec:
    """
    Bipolar THz probe pulse, the negative derivative of a Gaussian up to a
    constant: ``chi(t) = (t0 - t) exp(-(t - t0)^2 / (2 T^2))`` for ``t >= 0``.

    :param t0: Pulse center delay in seconds.
    :type t0: float
    :param width: Width parameter ``T`` in seconds.
    :type width: float
    """

    t0: float = 1e-12
    width: float = 0.25e-12

    def __post_init__(self) -> None:
        if not self.t0 > 0:
            raise ValidationError(ORIGIN, "must be > 0", field="t0")
        if not self.width > 0:
            raise ValidationError(ORIGIN, "must be > 0", field="pulse_width")


def pulseValue(spec: PulseSpec, t: ArrayLike) -> ArrayLike:
    """
    Evaluate the probe pulse.

    :param spec: Pulse parameters.
    :type spec: PulseSpec
    :param t: Time(s) in seconds; negative times evaluate to 0.
    :type t: ArrayLike
    :return: Pulse amplitude (seconds units), same shape as ``t``.
    :rtype: ArrayLike
    """
    t = numpy.asarray(t, dtype=numpy.float64)
    shifted: ndarray = t - spec.t0
    value: ndarray = -shifted * numpy.exp(
        -(shifted**2) / (2.0 * spec.width**2)
    )
    value = numpy.where(t >= 0, value, 0.0)
    return float(value) if value.ndim == 0 else value


def trainCoefficients(rho: ArrayLike, nReflections: int) -> ndarray:
    """
    Echo weights of the single-slab impulse train for one or many
    reflectances.

    :return: Array of shape ``rho.shape + (nReflections + 1,)``; entry 0 is
        the front-surface weight 1, entry ``m`` is
        ``-(1 - rho^2) / rho^2 * rho^(2m)``.
    :rtype: ndarray
    """
    rho = numpy.asarray(rho, dtype=numpy.float64)
    orders: ndarray = numpy.arange(1, nReflections + 1)

    rhoSq: ndarray = rho[..., None] ** 2
    echoes: ndarray = -(1.0 - rhoSq) / rhoSq * rhoSq**orders
    front: ndarray = numpy.ones(rho.shape + (1,))
    return numpy.concatenate([front, echoes], axis=-1)


def impulseTrain(
    rho: float, tauRho: float, nReflections: int
) -> List[Tuple[float, float]]:
    """
    Truncated reflection impulse train of a homogeneous slab.

    The front surface contributes ``(0, 1)``; echo ``m`` arrives after
    ``2 m tau_rho`` with weight ``-(1 - rho^2) / rho^2 * rho^(2m)``. The outer
    ``rho`` factor of the reflected field is not included.

    :param rho: Slab reflectance in ``(0, 1)``.
    :type rho: float
    :param tauRho: One-way optical delay ``n_rho d / c`` in seconds.
    :type tauRho: float
    :param nReflections: Number of echoes kept after the front surface.
    :type nReflections: int
    :return: ``(delay, coefficient)`` pairs, front surface first.
    :rtype: List[Tuple[float, float]]
    """
    if not 0 < rho < 1:
        raise DomainError(ORIGIN, f"must lie in (0, 1), got {rho}", "rho")
    if not tauRho > 0:
        raise DomainError(ORIGIN, f"must be > 0, got {tauRho}", "tau_rho")
    if nReflections < 1:
        raise DomainError(ORIGIN, "must be >= 1", "n_reflections")

    coefficients: ndarray = trainCoefficients(rho, nReflections)
    return [
        (2.0 * m * tauRho, float(coefficients[m]))
        for m in range(nReflections + 1)
    ]

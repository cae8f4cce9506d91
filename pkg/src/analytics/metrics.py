from typing import Tuple

import numpy
from numpy import ndarray

from src.core.errors import ContractError
from src.core.imageGrid import ImageGrid

ORIGIN: str = "analytics.metrics"


def mse(estimate: ImageGrid, reference: ImageGrid) -> float:
    """
    Mean squared error between two images on the same grid.

    :param estimate: Reconstructed image.
    :type estimate: ImageGrid
    :param reference: Ground truth.
    :type reference: ImageGrid
    :return: ``mean((estimate - reference)^2)``.
    :rtype: float
    """
    shape: Tuple[int, int] = (estimate.width, estimate.height)
    if shape != (reference.width, reference.height):
        raise ContractError(
            ORIGIN,
            f"{estimate.width}x{estimate.height} estimate against "
            f"{reference.width}x{reference.height} reference",
        )
    return float(numpy.mean((estimate.values - reference.values) ** 2))


def binaryRound(estimate: ImageGrid, rho0: float, rho1: float) -> ImageGrid:
    """
    Snap every pixel to the nearer of ``rho0`` and ``rho1``; the exact
    midpoint goes to ``rho0``.
    """
    values: ndarray = estimate.values
    nearer0: ndarray = numpy.abs(values - rho0) <= numpy.abs(values - rho1)
    return estimate.withValues(numpy.where(nearer0, rho0, rho1))


def labelsFromImage(
    estimate: ImageGrid, rho0: float, rho1: float
) -> ndarray:
    """Class labels (0/1) implied by :func:`binaryRound`."""
    values: ndarray = estimate.values
    return numpy.where(
        numpy.abs(values - rho0) <= numpy.abs(values - rho1), 0, 1
    )


def misclassificationRate(labels: ndarray, truth: ndarray) -> float:
    labels = numpy.ravel(labels)
    truth = numpy.ravel(truth)
    if labels.shape != truth.shape:
        raise ContractError(
            ORIGIN, f"{labels.size} labels against {truth.size} truths"
        )
    return float(numpy.mean(labels != truth))

import numpy
import pytest

from src.analytics.metrics import (
    binaryRound,
    labelsFromImage,
    misclassificationRate,
    mse,
)
from src.core.errors import ContractError
from src.core.imageGrid import ImageGrid


def grid(values, width: int = 2, height: int = 2) -> ImageGrid:
    return ImageGrid(
        width=width, height=height, values=numpy.asarray(values, float)
    )


def test_mse() -> None:
    assert mse(grid([0.3, 0.1, 0.3, 0.3]), grid([0.3] * 4)) == pytest.approx(
        0.01
    )
    assert mse(grid([0.2] * 4), grid([0.2] * 4)) == 0.0


def test_mse_needs_the_same_grid() -> None:
    with pytest.raises(ContractError):
        mse(grid([0.0] * 4), grid([0.0] * 4, width=4, height=1))


def test_binary_round_snaps_to_the_nearer_class() -> None:
    rounded: ImageGrid = binaryRound(grid([0.29, 0.12, 0.5, -1.0]), 0.3, 0.1)
    assert numpy.allclose(rounded.values, [0.3, 0.1, 0.3, 0.1])


def test_midpoint_rounds_to_class_zero() -> None:
    rounded: ImageGrid = binaryRound(grid([0.25] * 4), 0.5, 0.0)
    assert numpy.all(rounded.values == 0.5)
    assert not numpy.any(labelsFromImage(grid([0.25] * 4), 0.5, 0.0))


def test_labels_agree_with_rounding() -> None:
    estimate: ImageGrid = grid([0.29, 0.12, 0.5, 0.0])
    labels = labelsFromImage(estimate, 0.3, 0.1)
    rounded: ImageGrid = binaryRound(estimate, 0.3, 0.1)

    assert list(labels) == [0, 1, 0, 1]
    assert numpy.array_equal(
        rounded.values, numpy.where(labels == 1, 0.1, 0.3)
    )


def test_misclassification_rate() -> None:
    truth = numpy.array([[0, 1], [1, 0]])
    assert misclassificationRate(numpy.array([0, 1, 1, 0]), truth) == 0.0
    assert misclassificationRate(numpy.array([1, 1, 1, 0]), truth) == 0.25
    with pytest.raises(ContractError):
        misclassificationRate(numpy.zeros(3), truth)

from typing import Callable, List

import numpy
import pytest
from numpy import ndarray
from numpy.random import Generator

from src.core.imageGrid import FrameStack
from src.core.priors import PriorConfig
from src.forward.simulate import makeGenerator
from src.subspace.sweepSubspace import SweepSubspace


@pytest.fixture
def rng() -> Generator:
    return makeGenerator(20240707)


def orthonormalColumns(rng: Generator, rows: int, columns: int) -> ndarray:
    q: ndarray
    q, _ = numpy.linalg.qr(rng.standard_normal((rows, columns)))
    return q


@pytest.fixture
def randomSubspaces(
    rng: Generator,
) -> Callable[[int, int, int], List[SweepSubspace]]:
    def build(pixels: int, frames: int, dimension: int) -> List[SweepSubspace]:
        return [
            SweepSubspace(
                basis=orthonormalColumns(rng, pixels, dimension),
                provenance="oracle",
                frameIndex=j,
            )
            for j in range(frames)
        ]

    return build


@pytest.fixture
def separatedPrior() -> PriorConfig:
    """Class means 0.3/0.1 with a prior far tighter than the data term."""
    return PriorConfig(
        rho0=0.3,
        rho1=0.1,
        sigma0Sq=1e-8,
        sigma1Sq=1e-8,
        noiseSigmaSq=1e-6,
    )


@pytest.fixture
def bilinearInstance(rng: Generator):
    """
    Noiseless 8x8 instance with O(1) positive distortions: returns
    ``(stack, labels, rho, distortions)``.
    """
    width: int = 8
    height: int = 8
    frames: int = 6

    labels: ndarray = (rng.uniform(size=width * height) < 0.4).astype(int)
    labels[:2] = [0, 1]
    rho: ndarray = numpy.where(labels == 1, 0.1, 0.3)

    rows: ndarray
    cols: ndarray
    rows, cols = numpy.divmod(numpy.arange(width * height), width)
    distortions: ndarray = numpy.column_stack(
        [
            (1.0 + 0.5 * j)
            * (
                1.0
                + 0.3 * numpy.cos(2 * numpy.pi * (rows + j) / height)
                + 0.2 * numpy.sin(2 * numpy.pi * cols / width)
            )
            for j in range(frames)
        ]
    )

    stack: FrameStack = FrameStack(
        width=width, height=height, frames=rho[:, None] * distortions
    )
    return stack, labels, rho, distortions

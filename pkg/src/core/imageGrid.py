from dataclasses import dataclass
from typing import Optional, Sequence

import numpy
from numpy import ndarray

from src.core.errors import ContractError, ValidationError

ORIGIN: str = "core.imageGrid"


def _frozenArray(values: ndarray, dtype: type = numpy.float64) -> ndarray:
    array: ndarray = numpy.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ImageGrid:
    """
    A single image on a regular pixel grid.

    Pixels are vectorized row-major: pixel ``i`` sits at row ``i // width``
    and column ``i % width``. Every matrix in the package (frames, subspace
    bases, distortions) indexes pixels the same way.

    :param width: Number of columns.
    :type width: int
    :param height: Number of rows.
    :type height: int
    :param values: Flat array of ``width * height`` finite reals.
    :type values: ndarray
    :param pixelPitchX: Horizontal pixel size in meters.
    :type pixelPitchX: float
    :param pixelPitchY: Vertical pixel size in meters.
    :type pixelPitchY: float
    """

    width: int
    height: int
    values: ndarray
    pixelPitchX: float = 1e-4
    pixelPitchY: float = 1e-4

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValidationError(ORIGIN, "must be >= 1", field="width")
        if self.height < 1:
            raise ValidationError(ORIGIN, "must be >= 1", field="height")

        values: ndarray = _frozenArray(numpy.ravel(self.values))
        if values.size != self.width * self.height:
            raise ValidationError(
                ORIGIN,
                f"expected {self.width * self.height} values, "
                f"got {values.size}",
                field="values",
            )
        if not numpy.all(numpy.isfinite(values)):
            raise ValidationError(ORIGIN, "non-finite value", field="values")

        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.width * self.height

    def asImage(self) -> ndarray:
        """
        :return: The values as a ``height x width`` array.
        :rtype: ndarray
        """
        return self.values.reshape(self.height, self.width)

    def withValues(self, values: ndarray) -> "ImageGrid":
        return ImageGrid(
            width=self.width,
            height=self.height,
            values=values,
            pixelPitchX=self.pixelPitchX,
            pixelPitchY=self.pixelPitchY,
        )


@dataclass(frozen=True)
class FrameStack:
    """
    The ``P x M`` observation matrix Y.

    Column ``j`` is the vectorized frame ``y_j``; all frames share the grid
    described by ``width``, ``height`` and the pixel pitches.

    :param frames: ``P x M`` real matrix.
    :type frames: ndarray
    :param sampleTimes: Optional strictly increasing timestamps (seconds),
        one per frame.
    :type sampleTimes: Optional[ndarray]
    """

    width: int
    height: int
    frames: ndarray
    sampleTimes: Optional[ndarray] = None
    pixelPitchX: float = 1e-4
    pixelPitchY: float = 1e-4

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValidationError(
                ORIGIN, "grid dimensions must be >= 1", field="width"
            )

        frames: ndarray = numpy.array(self.frames, dtype=numpy.float64)
        if frames.ndim == 1:
            frames = frames[:, None]

        if frames.ndim != 2 or frames.shape[0] != self.width * self.height:
            raise ValidationError(
                ORIGIN,
                f"frames must be {self.width * self.height} x M, "
                f"got {frames.shape}",
                field="frames",
            )
        if frames.shape[1] < 1:
            raise ValidationError(ORIGIN, "M must be >= 1", field="M")
        if not numpy.all(numpy.isfinite(frames)):
            raise ValidationError(ORIGIN, "non-finite value", field="frames")

        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

        if self.sampleTimes is not None:
            times: ndarray = _frozenArray(numpy.ravel(self.sampleTimes))
            if times.size != frames.shape[1]:
                raise ValidationError(
                    ORIGIN,
                    f"expected {frames.shape[1]} timestamps, "
                    f"got {times.size}",
                    field="sample_times",
                )
            if numpy.any(numpy.diff(times) <= 0):
                raise ValidationError(
                    ORIGIN,
                    "must be strictly increasing",
                    field="sample_times",
                )
            object.__setattr__(self, "sampleTimes", times)

    @property
    def pixelCount(self) -> int:
        return self.frames.shape[0]

    @property
    def frameCount(self) -> int:
        return self.frames.shape[1]

    def frame(self, j: int) -> ImageGrid:
        return ImageGrid(
            width=self.width,
            height=self.height,
            values=self.frames[:, j],
            pixelPitchX=self.pixelPitchX,
            pixelPitchY=self.pixelPitchY,
        )

    def selectFrames(self, indices: Sequence[int]) -> "FrameStack":
        """
        Build a sub-stack from a set of frame indices.

        Indices are sorted first so that timestamps stay increasing.

        :param indices: Frame indices to keep.
        :type indices: Sequence[int]
        :return: A new stack holding only those frames.
        :rtype: FrameStack
        """
        order: ndarray = numpy.sort(numpy.asarray(indices, dtype=int))
        if order.size == 0:
            raise ContractError(ORIGIN, "at least one frame must be selected")

        times: Optional[ndarray] = None
        if self.sampleTimes is not None:
            times = self.sampleTimes[order]

        return FrameStack(
            width=self.width,
            height=self.height,
            frames=self.frames[:, order],
            sampleTimes=times,
            pixelPitchX=self.pixelPitchX,
            pixelPitchY=self.pixelPitchY,
        )

    def withFrames(self, frames: ndarray) -> "FrameStack":
        return FrameStack(
            width=self.width,
            height=self.height,
            frames=frames,
            sampleTimes=self.sampleTimes,
            pixelPitchX=self.pixelPitchX,
            pixelPitchY=self.pixelPitchY,
        )

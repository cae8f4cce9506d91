from abc import ABCMeta, abstractmethod

from pandas import DataFrame
from plotly.graph_objects import Figure

from src.utils import PathLike


class Analytic(metaclass=ABCMeta):
    """
    An evaluation that produces a table, can draw it, and can persist it.
    """

    @abstractmethod
    def compute(self) -> DataFrame: ...

    @abstractmethod
    def plot(self, data: DataFrame) -> Figure: ...

    @abstractmethod
    def run(self, path: PathLike) -> DataFrame: ...

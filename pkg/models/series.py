from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from core.errors import MetricsError

MASS_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class WeightedSample1D:
    """A discrete probability measure on [-1, 1]."""

    values: NDArray[np.float64]
    weights: NDArray[np.float64]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if values.shape != weights.shape or values.size == 0:
            raise MetricsError("sample needs as many weights as values, and at least one atom")
        if np.any(weights < 0.0):
            raise MetricsError("sample weights must be nonnegative")
        total = float(np.sum(weights))
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise MetricsError(f"sample mass is {total:.17g}, expected 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_values(cls, values: NDArray[np.float64]) -> "WeightedSample1D":
        values = np.asarray(values, dtype=np.float64).ravel()
        return cls(values, np.full(values.size, 1.0 / values.size))

    @classmethod
    def dirac(cls, c: float) -> "WeightedSample1D":
        return cls(np.array([c]), np.array([1.0]))

    def sorted(self) -> "WeightedSample1D":
        order = np.argsort(self.values, kind="stable")
        return WeightedSample1D(self.values[order], self.weights[order])

    def mean(self) -> float:
        return float(np.dot(self.values, self.weights))


@dataclass(frozen=True)
class TimeSeriesRow:
    tau: float
    m_t: float
    max_abs_mean_error: float
    w1_to_limit: float
    min_w: float
    max_w: float
    group_means: Tuple[float, ...]
    group_diameters: Tuple[float, ...]


@dataclass
class TimeSeries:
    """
    Observables recorded along a Monte Carlo run.

    One column pair (mean_g{i}, diam_g{i}) per flexible group, 0-based.
    """

    n_groups: int
    rows: List[TimeSeriesRow] = field(default_factory=list)

    BASE_COLUMNS = ("tau", "m_t", "max_abs_mean_error", "w1_to_limit", "min_w", "max_w")

    def append(self, row: TimeSeriesRow) -> None:
        if self.rows and row.tau <= self.rows[-1].tau:
            raise MetricsError(f"tau must increase strictly: {row.tau} after {self.rows[-1].tau}")
        if len(row.group_means) != self.n_groups or len(row.group_diameters) != self.n_groups:
            raise MetricsError("row does not match the number of flexible groups")
        self.rows.append(row)

    def columns(self) -> List[str]:
        return (
            list(self.BASE_COLUMNS)
            + [f"mean_g{i}" for i in range(self.n_groups)]
            + [f"diam_g{i}" for i in range(self.n_groups)]
        )

    def column(self, name: str) -> NDArray[np.float64]:
        return self.to_frame()[name].to_numpy(dtype=np.float64)

    @property
    def taus(self) -> NDArray[np.float64]:
        return np.array([row.tau for row in self.rows], dtype=np.float64)

    def to_frame(self) -> pd.DataFrame:
        records = [
            [row.tau, row.m_t, row.max_abs_mean_error, row.w1_to_limit, row.min_w, row.max_w]
            + list(row.group_means)
            + list(row.group_diameters)
            for row in self.rows
        ]
        return pd.DataFrame.from_records(records, columns=self.columns()).astype(np.float64)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of log d(t) = log C - rate * t."""

    rate: float
    prefactor: float
    r_squared: float
    n_points: int

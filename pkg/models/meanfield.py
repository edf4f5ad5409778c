from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from models.agent import GroupSpec
from models.series import WeightedSample1D


@dataclass(frozen=True, eq=False)
class MeanFieldSystem:
    """
    Data of the linear group-means system M'(t) = A M(t) + B.

    Row i describes one flexible (p, q) class; `members[i]` lists the indices of
    the configured flexible groups merged into that row.
    """

    weights: NDArray[np.float64]
    p: NDArray[np.float64]
    q: NDArray[np.float64]
    alpha0: float
    mean_p: float
    mean_p_stubborn: float
    m00: float
    eps0: float
    A: NDArray[np.float64]
    B: NDArray[np.float64]
    members: Tuple[Tuple[int, ...], ...]
    initial_means: Optional[NDArray[np.float64]] = None

    @property
    def n_groups(self) -> int:
        return int(self.weights.shape[0])

    @property
    def rate_exponent(self) -> float:
        """Guaranteed decay exponent eps0 * alpha0 * <p>_{q=0}."""
        return self.eps0 * self.alpha0 * self.mean_p_stubborn

    def infinity_norm(self) -> float:
        return float(np.max(np.sum(np.abs(self.A), axis=1)))

    def with_matrix(self, A: NDArray[np.float64]) -> "MeanFieldSystem":
        return replace(self, A=np.array(A, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class QuantileProfile:
    """
    Quantile function of one flexible group on the grid r_j = (j - 1/2)/R plus r = 1.

    The last node tracks the supremum characteristic; means use the R midpoints.
    """

    group: int
    q: float
    levels: NDArray[np.float64]
    values: NDArray[np.float64]

    def mean(self) -> float:
        return float(np.mean(self.values[:-1]))

    def spread(self) -> float:
        return float(self.values[-1] - self.values[0])

    def to_sample(self) -> WeightedSample1D:
        return WeightedSample1D.from_values(self.values[:-1])

    def with_values(self, values: NDArray[np.float64]) -> "QuantileProfile":
        return QuantileProfile(group=self.group, q=self.q, levels=self.levels, values=values)


@dataclass(frozen=True, eq=False)
class MeanTrajectory:
    """Dense RK4 solution of the group-means system and the induced weighted mean m_t."""

    times: NDArray[np.float64]
    means: NDArray[np.float64]
    m_t: NDArray[np.float64]

    def m_at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.m_t))

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


@dataclass(frozen=True, eq=False)
class QuantileFlow:
    """Quantile profiles evolved along the characteristics, sampled at `times`."""

    times: NDArray[np.float64]
    snapshots: List[Tuple[QuantileProfile, ...]]
    final: Tuple[QuantileProfile, ...]


@dataclass(frozen=True)
class LimitDistribution:
    """
    Asymptotic state: the stubborn part is frozen, the flexible part collapses
    onto a Dirac mass at m00 in opinion while keeping its (p, q) marginal.
    """

    stubborn_groups: Tuple[GroupSpec, ...]
    stubborn_mass: float
    flexible_opinion: Optional[float]
    flexible_pq: Tuple[Tuple[float, float, float], ...]
    flexible_mass: float
    rate_exponent: Optional[float]
    prefactor: float

    def bound(self, t: float) -> float:
        """Guaranteed W1 distance to the limit at time t."""
        if self.rate_exponent is None:
            return 0.0
        return self.prefactor * float(np.exp(-self.rate_exponent * t))

    def to_dict(self) -> dict:
        return {
            "stubborn_mass": self.stubborn_mass,
            "flexible_mass": self.flexible_mass,
            "flexible_opinion": self.flexible_opinion,
            "flexible_pq": [list(item) for item in self.flexible_pq],
            "rate_exponent": self.rate_exponent,
            "prefactor": self.prefactor,
        }


@dataclass(frozen=True, eq=False)
class MeanFieldResult:
    """Everything one mean-field solve produces."""

    system: MeanFieldSystem
    trajectory: MeanTrajectory
    flow: QuantileFlow
    limit: LimitDistribution

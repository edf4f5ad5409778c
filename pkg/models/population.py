import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

import numpy as np
from numpy.typing import NDArray

from models.series import TimeSeries


class Subset(Enum):
    ALL = "all"
    FLEXIBLE = "flexible"
    STUBBORN = "stubborn"


def _frozen(values: NDArray) -> NDArray:
    copy = np.array(values, copy=True)
    copy.setflags(write=False)
    return copy


@dataclass(frozen=True)
class PopulationSnapshot:
    """Read-only view of a population at one record time."""

    w: NDArray[np.float64]
    p: NDArray[np.float64]
    q: NDArray[np.float64]
    group: NDArray[np.int64]
    t: float
    tau: float
    n_events: int

    @property
    def stubborn_mask(self) -> NDArray[np.bool_]:
        return self.q == 0.0

    @property
    def flexible_mask(self) -> NDArray[np.bool_]:
        return self.q > 0.0

    @property
    def n_agents(self) -> int:
        return int(self.w.shape[0])


@dataclass
class PopulationState:
    """
    The evolving empirical measure of the Monte Carlo engine.

    Agents are stored as parallel arrays (w, p, q). `group` holds each agent's
    index inside its own subpopulation: stubborn agents index the stubborn
    groups, flexible agents index the flexible groups. Only `w` changes.

    The clock is kept as an event count: every collision advances the kinetic
    time t by 2/N, and tau = gamma * t.
    """

    w: NDArray[np.float64]
    p: NDArray[np.float64]
    q: NDArray[np.float64]
    group: NDArray[np.int64]
    gamma: float
    rng: np.random.Generator
    flexible_weights: Tuple[float, ...] = ()
    n_events: int = 0
    n_rejections: int = 0
    n_fallbacks: int = 0
    _pq_digest: str = field(default="", repr=False)

    def __post_init__(self):
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.p = np.ascontiguousarray(self.p, dtype=np.float64)
        self.q = np.ascontiguousarray(self.q, dtype=np.float64)
        self.group = np.ascontiguousarray(self.group, dtype=np.int64)
        # p and q never change, so neither should they be writable
        self.p.setflags(write=False)
        self.q.setflags(write=False)
        self._pq_digest = pq_multiset_digest(self.p, self.q)

    @property
    def n_agents(self) -> int:
        return int(self.w.shape[0])

    @property
    def dt_event(self) -> float:
        return 2.0 / self.n_agents

    @property
    def t(self) -> float:
        return self.n_events * self.dt_event

    @property
    def tau(self) -> float:
        return self.gamma * self.t

    @property
    def stubborn_mask(self) -> NDArray[np.bool_]:
        return self.q == 0.0

    @property
    def flexible_mask(self) -> NDArray[np.bool_]:
        return self.q > 0.0

    @property
    def initial_pq_digest(self) -> str:
        return self._pq_digest

    def snapshot(self) -> PopulationSnapshot:
        return PopulationSnapshot(
            w=_frozen(self.w),
            p=self.p,
            q=self.q,
            group=_frozen(self.group),
            t=self.t,
            tau=self.tau,
            n_events=self.n_events,
        )

    def to_bytes(self) -> bytes:
        """Serialized agent arrays, used for byte-level reproducibility checks."""
        return self.w.tobytes() + self.p.tobytes() + self.q.tobytes() + self.group.tobytes()


def pq_multiset_digest(p: NDArray[np.float64], q: NDArray[np.float64]) -> str:
    """Hash of the sorted (p, q) pairs; identical for any permutation of agents."""
    order = np.lexsort((q, p))
    pairs = np.stack([p[order], q[order]], axis=1)
    return hashlib.sha1(np.ascontiguousarray(pairs).tobytes()).hexdigest()


@dataclass
class SimulationResult:
    """Final state of a Monte Carlo run together with its recorded observables."""

    state: PopulationState
    series: TimeSeries

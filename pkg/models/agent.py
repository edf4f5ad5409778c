from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from numpy.typing import NDArray

from core.errors import ScenarioError

FloatOrArray = Union[float, NDArray[np.float64]]


def _check_unit(name: str, value: float, lo: float = 0.0, hi: float = 1.0) -> None:
    if not (lo <= value <= hi):
        raise ScenarioError(f"{name}={value} out of [{lo},{hi}]", field=name)


@dataclass(frozen=True)
class Agent:
    """
    A single agent of the kinetic model.

    Tracks:
    - w: opinion in [-1, 1], the only coordinate interactions change
    - p: persuasion power in [0, 1]
    - q: willingness to be persuaded in [0, 1]; q = 0 marks a stubborn agent
    """

    w: float
    p: float
    q: float

    def __post_init__(self):
        _check_unit("w", self.w, -1.0, 1.0)
        _check_unit("p", self.p)
        _check_unit("q", self.q)


class NoiseKind(Enum):
    QUADRATIC = "quadratic"
    LINEAR = "linear"
    SQRTQUAD = "sqrtquad"

    @property
    def code(self) -> int:
        """Integer tag understood by the compiled collision kernel."""
        return _NOISE_CODES[self]

    def diffusion(self, w: FloatOrArray) -> FloatOrArray:
        """Evaluate D(|w|), the opinion-dependent noise amplitude."""
        if self is NoiseKind.QUADRATIC:
            return 1.0 - np.square(w)
        if self is NoiseKind.LINEAR:
            return 1.0 - np.abs(w)
        return np.sqrt(np.maximum(1.0 - np.square(w), 0.0))

    def max_noise_amplitude(self, gamma: float) -> Optional[float]:
        """
        Largest |eta| that keeps every update inside [-1, 1] a priori.

        Returns None when only rejection keeps the update admissible.
        """
        if self is NoiseKind.LINEAR:
            return 1.0 - gamma
        if self is NoiseKind.QUADRATIC:
            return (1.0 - gamma) / 2.0
        return None


_NOISE_CODES = {NoiseKind.QUADRATIC: 0, NoiseKind.LINEAR: 1, NoiseKind.SQRTQUAD: 2}


@dataclass(frozen=True)
class OpinionDist:
    """Initial opinion law of a group: a point mass or a uniform law on [a, b]."""

    kind: str
    a: float
    b: float

    def __post_init__(self):
        if self.kind not in ("point", "uniform"):
            raise ScenarioError(f"unknown opinion distribution {self.kind!r}", field="w_dist")
        if not (-1.0 <= self.a <= self.b <= 1.0):
            raise ScenarioError(
                f"opinion distribution bounds ({self.a}, {self.b}) must satisfy -1 <= a <= b <= 1",
                field="w_dist",
            )
        if self.kind == "point" and self.a != self.b:
            raise ScenarioError("point distribution needs a == b", field="w_dist")

    @classmethod
    def point(cls, a: float) -> "OpinionDist":
        return cls("point", a, a)

    @classmethod
    def uniform(cls, a: float, b: float) -> "OpinionDist":
        return cls("uniform", a, b)

    def mean(self) -> float:
        if self.kind == "point":
            return self.a
        return (self.a + self.b) / 2.0

    def sample(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        if self.kind == "point":
            return np.full(n, self.a, dtype=np.float64)
        return rng.uniform(self.a, self.b, size=n)

    def quantile(self, r: NDArray[np.float64]) -> NDArray[np.float64]:
        """Generalized inverse CDF evaluated at levels r in (0, 1]."""
        r = np.asarray(r, dtype=np.float64)
        if self.kind == "point":
            return np.full_like(r, self.a)
        return self.a + r * (self.b - self.a)

    def __str__(self) -> str:
        if self.kind == "point":
            return f"point({self.a:.17g})"
        return f"uniform({self.a:.17g}, {self.b:.17g})"


@dataclass(frozen=True)
class GroupSpec:
    """A homogeneous block of agents sharing (p, q) and an initial opinion law."""

    weight: float
    p: float
    q: float
    w0: OpinionDist

    def __post_init__(self):
        if not (0.0 < self.weight <= 1.0):
            raise ScenarioError(f"weight={self.weight} out of (0,1]", field="weight")
        _check_unit("p", self.p)
        _check_unit("q", self.q)

    @property
    def is_stubborn(self) -> bool:
        return self.q == 0.0

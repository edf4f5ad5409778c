import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from core.config import settings
from core.errors import ScenarioError
from models.agent import GroupSpec, NoiseKind

WEIGHT_SUM_TOLERANCE = 1e-12
SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Full description of one experiment.

    The population is a mixture: a fraction alpha0 of stubborn agents (q = 0)
    split across `stubborn_groups`, the rest split across `flexible_groups`.
    Group weights are fractions within their own subpopulation.
    """

    stubborn_groups: Tuple[GroupSpec, ...]
    flexible_groups: Tuple[GroupSpec, ...]
    alpha0: float
    gamma: float
    sigma: float
    noise: NoiseKind
    n_agents: int
    tau_end: float
    seed: int
    record_every: float = settings.DEFAULT_RECORD_EVERY
    quantile_points: int = settings.DEFAULT_QUANTILE_POINTS
    dt_meanfield: float = settings.DEFAULT_MEANFIELD_DT
    flexible_q_bins: int = settings.DEFAULT_Q_BINS
    eps0: Optional[float] = None

    def __post_init__(self):
        # tuples keep the config hashable and comparable after parsing
        object.__setattr__(self, "stubborn_groups", tuple(self.stubborn_groups))
        object.__setattr__(self, "flexible_groups", tuple(self.flexible_groups))
        self._validate_scalars()
        self._validate_groups()
        self._validate_noise()

    def _validate_scalars(self) -> None:
        if self.n_agents < 2:
            raise ScenarioError(f"n_agents={self.n_agents} must be >= 2", field="n_agents")
        if not (0.0 <= self.alpha0 <= 1.0):
            raise ScenarioError(f"alpha0={self.alpha0} out of [0,1]", field="alpha0")
        if not (0.0 < self.gamma < 0.5):
            raise ScenarioError("gamma out of (0,0.5)", field="gamma")
        if not (self.sigma >= 0.0) or math.isinf(self.sigma):
            raise ScenarioError(f"sigma={self.sigma} must be a finite value >= 0", field="sigma")
        if not (self.tau_end >= 0.0) or math.isinf(self.tau_end):
            raise ScenarioError(f"tau_end={self.tau_end} must be a finite value >= 0", field="tau_end")
        if not (self.record_every > 0.0):
            raise ScenarioError(f"record_every={self.record_every} must be > 0", field="record_every")
        if not (0 <= self.seed < 2**64):
            raise ScenarioError(f"seed={self.seed} must fit in 64 unsigned bits", field="seed")
        if self.quantile_points < 2:
            raise ScenarioError(f"quantile_points={self.quantile_points} must be >= 2", field="quantile_points")
        if not (self.dt_meanfield > 0.0):
            raise ScenarioError(f"dt_meanfield={self.dt_meanfield} must be > 0", field="dt_meanfield")
        if self.flexible_q_bins < 1:
            raise ScenarioError(f"flexible_q_bins={self.flexible_q_bins} must be >= 1", field="flexible_q_bins")

    def _validate_groups(self) -> None:
        for group in self.stubborn_groups:
            if not group.is_stubborn:
                raise ScenarioError(f"stubborn group has q={group.q}, expected 0", field="q")
        for group in self.flexible_groups:
            if group.is_stubborn:
                raise ScenarioError("flexible group has q=0; declare it as stubborn", field="q")

        if self.alpha0 > 0.0 and not self.stubborn_groups:
            raise ScenarioError("alpha0 > 0 but no stubborn groups declared", field="alpha0")
        if self.alpha0 < 1.0 and not self.flexible_groups:
            raise ScenarioError("alpha0 < 1 but no flexible groups declared", field="alpha0")

        for name, groups in (("stubborn", self.stubborn_groups), ("flexible", self.flexible_groups)):
            if groups:
                total = math.fsum(g.weight for g in groups)
                if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
                    raise ScenarioError(f"{name} weights sum to {total:.17g}, expected 1", field="weight")

        if self.eps0 is not None:
            if not (0.0 < self.eps0 <= 1.0):
                raise ScenarioError(f"eps0={self.eps0} out of (0,1]", field="eps0")
            for group in self.flexible_groups:
                if group.q < self.eps0:
                    raise ScenarioError(
                        f"flexible group q={group.q} below declared eps0={self.eps0}", field="q"
                    )

    def _validate_noise(self) -> None:
        bound = self.noise.max_noise_amplitude(self.gamma)
        if bound is not None and self.sigma * SQRT3 > bound:
            raise ScenarioError(
                f"sigma admissibility violated: sigma*sqrt(3)={self.sigma * SQRT3:.6g} "
                f"exceeds {bound:.6g} for noise {self.noise.value}",
                field="sigma",
            )

    @property
    def effective_eps0(self) -> Optional[float]:
        """Declared lower bound on flexible q, else the smallest flexible q."""
        if self.eps0 is not None:
            return self.eps0
        if not self.flexible_groups:
            return None
        return min(g.q for g in self.flexible_groups)

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """Copy with some fields replaced; the copy is validated again."""
        return replace(self, **changes)


@dataclass(frozen=True)
class ScenarioStats:
    """Closed-form moments of the initial population."""

    mean_p: float
    mean_p_stubborn: float
    eps0: Optional[float]
    m00: Optional[float]

import logging
import math
from typing import Callable, List, Optional, Union

import numpy as np
from numpy.typing import NDArray

from core.config import settings
from core.errors import SimulationError
from models.agent import NoiseKind
from models.population import PopulationSnapshot, PopulationState, SimulationResult, Subset, pq_multiset_digest
from models.scenario import ScenarioConfig
from models.series import TimeSeries
from services.collision_kernel import collide
from services.metrics import observe
from services.population_builder import scenario_stats

logger = logging.getLogger(__name__)

Recorder = Callable[[PopulationSnapshot], None]

# slack for tau targets that are exact multiples of the event increment
_TAU_SLACK = 1e-9


def events_for_tau(tau: float, n_agents: int, gamma: float) -> int:
    """Smallest event count whose rescaled clock reaches `tau`."""
    return max(0, int(math.ceil(tau * n_agents / (2.0 * gamma) - _TAU_SLACK)))


def record_schedule(tau_end: float, record_every: float) -> List[float]:
    """Nominal record times 0, r, 2r, ... up to tau_end, closed by tau_end itself."""
    n_steps = int(math.floor(tau_end / record_every + _TAU_SLACK))
    taus = [k * record_every for k in range(n_steps + 1)]
    if tau_end - taus[-1] > _TAU_SLACK:
        taus.append(tau_end)
    return taus


class CollisionSimulator:
    """
    Monte Carlo engine for the kinetic opinion dynamics.

    Every event picks a uniformly random pair of distinct agents and applies
    the compromise-plus-noise rule to both. Events run inside a compiled kernel
    in chunks; each chunk reseeds the kernel from the state's generator.
    """

    def __init__(
        self,
        resample_limit: int = settings.NOISE_RESAMPLE_LIMIT,
        chunk_size: int = settings.EVENT_CHUNK,
    ):
        self.resample_limit = resample_limit
        self.chunk_size = chunk_size

    def advance(
        self,
        state: PopulationState,
        n_events: int,
        gamma: float,
        sigma: float,
        noise: NoiseKind,
    ) -> PopulationState:
        """Execute `n_events` collisions on `state` in place."""
        if state.n_agents < 2:
            raise SimulationError("collisions need at least 2 agents")
        if gamma != state.gamma:
            raise SimulationError(f"state clock runs at gamma={state.gamma}, got gamma={gamma}")

        remaining = n_events
        while remaining > 0:
            chunk = min(remaining, self.chunk_size)
            seed = int(state.rng.integers(0, 2**31 - 1))
            rejections, fallbacks = collide(
                state.w, state.p, state.q, chunk, gamma, sigma, noise.code, self.resample_limit, seed
            )
            state.n_events += chunk
            state.n_rejections += int(rejections)
            state.n_fallbacks += int(fallbacks)
            remaining -= chunk
            if fallbacks:
                logger.warning(f"{fallbacks} events fell back to zero noise after {self.resample_limit} resamples")
            if settings.debug_checks:
                self._check_invariants(state)
        return state

    def step_event(
        self,
        state: PopulationState,
        gamma: float,
        sigma: float,
        noise: NoiseKind,
    ) -> PopulationState:
        """Execute a single collision."""
        return self.advance(state, 1, gamma, sigma, noise)

    def run(
        self,
        state: PopulationState,
        cfg: ScenarioConfig,
        recorder: Optional[Recorder] = None,
    ) -> SimulationResult:
        """
        Run until tau >= cfg.tau_end, recording every cfg.record_every units of tau.

        The first record is the state as given. `recorder` receives read-only
        snapshots synchronously and must not keep them past the call.
        """
        stats = scenario_stats(cfg, with_limit=False)
        weights = [g.weight for g in cfg.flexible_groups]
        series = TimeSeries(n_groups=len(weights))

        logger.info(
            f"Running {cfg.n_agents} agents to tau={cfg.tau_end} "
            f"(gamma={cfg.gamma}, sigma={cfg.sigma}, noise={cfg.noise.value})"
        )
        for target in record_schedule(cfg.tau_end, cfg.record_every):
            needed = events_for_tau(target, state.n_agents, cfg.gamma) - state.n_events
            if series.rows and needed <= 0:
                logger.debug(f"Skipping record at tau={target}: no event since the previous record")
                continue
            if needed > 0:
                self.advance(state, needed, cfg.gamma, cfg.sigma, cfg.noise)

            snapshot = state.snapshot()
            series.append(observe(snapshot, stats.m00, weights))
            if recorder is not None:
                recorder(snapshot)

        logger.info(
            f"Finished at tau={state.tau:.6g} after {state.n_events} events "
            f"({state.n_rejections} noise rejections, {state.n_fallbacks} fallbacks)"
        )
        return SimulationResult(state=state, series=series)

    def density_grid(
        self,
        source: Union[PopulationState, PopulationSnapshot],
        n_w: int,
        n_q: int,
        subset: Subset = Subset.FLEXIBLE,
    ) -> NDArray[np.float64]:
        """
        Histogram of (w, q) on uniform bins over [-1, 1] x [0, 1].

        Bins are left-closed except the last, which is closed. Each agent adds
        1/N, so the grid sums to the subset's population fraction.
        """
        if n_w < 1 or n_q < 1:
            raise ValueError(f"density grid needs n_w, n_q >= 1, got {n_w}x{n_q}")
        if subset is Subset.STUBBORN:
            mask = source.stubborn_mask
        elif subset is Subset.FLEXIBLE:
            mask = source.flexible_mask
        else:
            mask = np.ones(source.w.shape[0], dtype=bool)

        n_agents = source.w.shape[0]
        grid, _, _ = np.histogram2d(
            source.w[mask],
            source.q[mask],
            bins=[n_w, n_q],
            range=[[-1.0, 1.0], [0.0, 1.0]],
            weights=np.full(int(np.count_nonzero(mask)), 1.0 / n_agents),
        )
        return grid

    def _check_invariants(self, state: PopulationState) -> None:
        if np.any(np.abs(state.w) > 1.0):
            raise SimulationError(
                f"opinion left [-1, 1]: min={state.w.min():.17g}, max={state.w.max():.17g}"
            )
        if pq_multiset_digest(state.p, state.q) != state.initial_pq_digest:
            raise SimulationError("(p, q) multiset changed during the run")


collision_simulator = CollisionSimulator()

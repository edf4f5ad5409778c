import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from core.config import settings
from core.errors import MeanFieldError
from models.meanfield import LimitDistribution, MeanFieldSystem, MeanTrajectory, QuantileFlow, QuantileProfile
from models.scenario import ScenarioConfig
from services.population_builder import scenario_stats

logger = logging.getLogger(__name__)

# step counts are rounded with this slack so that t_end = k * dt gives exactly k steps
_STEP_SLACK = 1e-9


def system_from_groups(
    weights: Sequence[float],
    p: Sequence[float],
    q: Sequence[float],
    alpha0: float,
    mean_p_stubborn: float,
    m00: float,
    eps0: Optional[float] = None,
    members: Optional[Tuple[Tuple[int, ...], ...]] = None,
    initial_means: Optional[Sequence[float]] = None,
) -> MeanFieldSystem:
    """
    Build A and B of M' = A M + B for flexible classes (weight, p, q).

    A_ij = q_i (1 - alpha0) alpha_j p_j off the diagonal,
    A_ii = q_i ((1 - alpha0) alpha_i p_i - <p>),
    B    = alpha0 <p>_{q=0} m00 q.
    """
    weights = np.asarray(weights, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    flexible_mass = 1.0 - alpha0
    pull = flexible_mass * weights * p
    mean_p = alpha0 * mean_p_stubborn + math.fsum(pull)

    A = np.outer(q, pull)
    A[np.diag_indices_from(A)] = q * (pull - mean_p)
    B = alpha0 * mean_p_stubborn * m00 * q

    return MeanFieldSystem(
        weights=weights,
        p=p,
        q=q,
        alpha0=alpha0,
        mean_p=mean_p,
        mean_p_stubborn=mean_p_stubborn,
        m00=m00,
        eps0=float(np.min(q)) if eps0 is None else eps0,
        A=A,
        B=B,
        members=members if members is not None else tuple((i,) for i in range(weights.size)),
        initial_means=None if initial_means is None else np.asarray(initial_means, dtype=np.float64),
    )


def identity_residuals(system: MeanFieldSystem) -> Dict[str, float]:
    """Max-norm residuals of the exact identities of the system, keyed by check name."""
    ones = np.ones(system.n_groups)
    sink = system.alpha0 * system.mean_p_stubborn
    return {
        "A·1 identity": float(np.max(np.abs(system.A @ ones + sink * system.q), initial=0.0)),
        "A⁻¹B identity": float(np.max(np.abs(system.A @ (-system.m00 * ones) - system.B), initial=0.0)),
    }


def gerschgorin_row_sums(system: MeanFieldSystem) -> NDArray[np.float64]:
    """A_ii + sum_{k != i} |A_ik| for every row."""
    off_diagonal = np.abs(system.A).sum(axis=1) - np.abs(np.diag(system.A))
    return np.diag(system.A) + off_diagonal


def assemble(cfg: ScenarioConfig) -> MeanFieldSystem:
    """
    Assemble the group-means system of a scenario.

    Flexible groups with identical (p, q) are merged into one row, their
    weights added and their initial means averaged.
    """
    if cfg.alpha0 == 0.0:
        raise MeanFieldError("alpha0 zero")
    if not cfg.flexible_groups:
        raise MeanFieldError("no flexible groups: the mean-field system is empty")
    stats = scenario_stats(cfg)

    rows: Dict[Tuple[float, float], List[int]] = {}
    for index, group in enumerate(cfg.flexible_groups):
        rows.setdefault((group.p, group.q), []).append(index)
    if len(rows) < len(cfg.flexible_groups):
        logger.warning(
            f"Merged {len(cfg.flexible_groups)} flexible groups into {len(rows)} distinct (p, q) rows"
        )

    weights, ps, qs, means, members = [], [], [], [], []
    for (p, q), indices in rows.items():
        groups = [cfg.flexible_groups[i] for i in indices]
        weight = math.fsum(g.weight for g in groups)
        weights.append(weight)
        ps.append(p)
        qs.append(q)
        means.append(math.fsum(g.weight * g.w0.mean() for g in groups) / weight)
        members.append(tuple(indices))

    system = system_from_groups(
        weights,
        ps,
        qs,
        alpha0=cfg.alpha0,
        mean_p_stubborn=stats.mean_p_stubborn,
        m00=stats.m00,
        eps0=cfg.effective_eps0,
        members=tuple(members),
        initial_means=means,
    )
    for name, residual in identity_residuals(system).items():
        if residual > settings.IDENTITY_TOLERANCE:
            raise MeanFieldError(f"{name} violated by {residual:.3e}")
    logger.info(
        f"Assembled {system.n_groups}-group system: m00={system.m00:.6g}, "
        f"guaranteed rate={system.rate_exponent:.6g}"
    )
    return system


def default_dt(system: MeanFieldSystem, requested: float = settings.DEFAULT_MEANFIELD_DT) -> float:
    """Step no larger than `requested` nor DT_SAFETY / ||A||_inf."""
    norm = system.infinity_norm()
    if norm == 0.0:
        return requested
    return min(requested, settings.DT_SAFETY / norm)


def _time_grid(t_end: float, dt: float) -> Tuple[int, float]:
    if dt <= 0.0:
        raise MeanFieldError(f"time step must be > 0, got {dt}")
    if t_end < 0.0:
        raise MeanFieldError(f"t_end must be >= 0, got {t_end}")
    if t_end == 0.0:
        return 0, dt
    n_steps = max(1, int(math.ceil(t_end / dt - _STEP_SLACK)))
    return n_steps, t_end / n_steps


def weighted_mean_from_means(system: MeanFieldSystem, means: NDArray[np.float64]) -> NDArray[np.float64]:
    """m_t = (alpha0 <p>_{q=0} m00 + (1 - alpha0) sum_j alpha_j p_j M_j) / <p>."""
    stubborn_part = system.alpha0 * system.mean_p_stubborn * system.m00
    flexible_part = (1.0 - system.alpha0) * (means @ (system.weights * system.p))
    return (stubborn_part + flexible_part) / system.mean_p


def solve_means(
    system: MeanFieldSystem,
    M0: Optional[Sequence[float]] = None,
    t_end: float = 0.0,
    dt: float = settings.DEFAULT_MEANFIELD_DT,
) -> MeanTrajectory:
    """
    Integrate M' = A M + B with classical RK4 on a uniform grid from 0 to t_end.

    The equilibrium is -A^{-1} B = m00 * 1, known in closed form; A is never inverted.
    """
    if M0 is None:
        M0 = system.initial_means
    if M0 is None:
        raise MeanFieldError("no initial means given")
    M = np.array(M0, dtype=np.float64)
    if M.shape != (system.n_groups,):
        raise MeanFieldError(f"initial means have shape {M.shape}, expected ({system.n_groups},)")
    if np.any(np.abs(M) > 1.0):
        raise MeanFieldError("initial means must lie in [-1, 1]")

    n_steps, h = _time_grid(t_end, dt)
    A, B = system.A, system.B
    limit = 1.0 + settings.UNSTABLE_MARGIN

    trajectory = np.empty((n_steps + 1, system.n_groups))
    trajectory[0] = M
    for step in range(1, n_steps + 1):
        k1 = A @ M + B
        k2 = A @ (M + 0.5 * h * k1) + B
        k3 = A @ (M + 0.5 * h * k2) + B
        k4 = A @ (M + h * k3) + B
        M = M + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(np.abs(M) > limit):
            raise MeanFieldError(f"unstable step: |M| exceeded 1 at t={step * h:.6g} (dt={h:.3g} too large)")
        trajectory[step] = M

    times = np.linspace(0.0, t_end, n_steps + 1)
    return MeanTrajectory(times=times, means=trajectory, m_t=weighted_mean_from_means(system, trajectory))


def quantile_levels(resolution: int) -> NDArray[np.float64]:
    """Midpoints (j - 1/2) / R for j = 1..R, followed by the endpoint r = 1."""
    return np.concatenate(((np.arange(resolution) + 0.5) / resolution, [1.0]))


def initial_profiles(cfg: ScenarioConfig, resolution: Optional[int] = None) -> Tuple[QuantileProfile, ...]:
    """Exact initial quantile functions of every flexible group."""
    levels = quantile_levels(resolution or cfg.quantile_points)
    return tuple(
        QuantileProfile(group=index, q=group.q, levels=levels, values=group.w0.quantile(levels))
        for index, group in enumerate(cfg.flexible_groups)
    )


def flow_quantiles(
    system: MeanFieldSystem,
    profiles: Sequence[QuantileProfile],
    trajectory: MeanTrajectory,
    t_end: float,
    dt: float,
    sample_times: Sequence[float] = (),
) -> QuantileFlow:
    """
    Move every quantile node along dX/dt = (m_t - X) q <p> with RK4.

    m_t is read from `trajectory` by linear interpolation. Profiles are also
    stored at the grid times nearest to each of `sample_times`.
    """
    if trajectory.times[0] > 0.0 or trajectory.t_end < t_end - _STEP_SLACK:
        raise MeanFieldError(f"m_t trajectory covers [{trajectory.times[0]}, {trajectory.t_end}], need [0, {t_end}]")
    if not profiles:
        return QuantileFlow(times=np.asarray(sample_times, dtype=np.float64), snapshots=[() for _ in sample_times], final=())

    n_steps, h = _time_grid(t_end, dt)
    X = np.stack([profile.values for profile in profiles]).astype(np.float64)
    rates = (np.array([profile.q for profile in profiles]) * system.mean_p)[:, None]

    def velocity(t: float, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return (trajectory.m_at(t) - values) * rates

    def as_profiles(values: NDArray[np.float64]) -> Tuple[QuantileProfile, ...]:
        return tuple(profile.with_values(values[k].copy()) for k, profile in enumerate(profiles))

    wanted: Dict[int, List[int]] = {}
    for position, t_sample in enumerate(sample_times):
        step = min(n_steps, max(0, int(round(t_sample / h)))) if n_steps else 0
        wanted.setdefault(step, []).append(position)
    snapshots: List[Optional[Tuple[QuantileProfile, ...]]] = [None] * len(sample_times)
    for position in wanted.get(0, []):
        snapshots[position] = as_profiles(X)

    for step in range(1, n_steps + 1):
        t = (step - 1) * h
        k1 = velocity(t, X)
        k2 = velocity(t + 0.5 * h, X + 0.5 * h * k1)
        k3 = velocity(t + 0.5 * h, X + 0.5 * h * k2)
        k4 = velocity(t + h, X + h * k3)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(np.diff(X, axis=1) < -settings.MONOTONICITY_TOLERANCE):
            raise MeanFieldError(f"monotonicity violated at t={step * h:.6g}")
        for position in wanted.get(step, []):
            snapshots[position] = as_profiles(X)

    return QuantileFlow(
        times=np.asarray(sample_times, dtype=np.float64),
        snapshots=snapshots,
        final=as_profiles(X),
    )


def limit_distribution(cfg: ScenarioConfig) -> LimitDistribution:
    """
    Asymptotic distribution: stubborn agents unchanged, flexible agents at m00.

    Comes with the guaranteed W1 decay 4 exp(-eps0 alpha0 <p>_{q=0} t).
    """
    if cfg.alpha0 == 0.0:
        raise MeanFieldError("no stubborn mass")
    stats = scenario_stats(cfg)

    if cfg.alpha0 == 1.0:
        return LimitDistribution(
            stubborn_groups=cfg.stubborn_groups,
            stubborn_mass=1.0,
            flexible_opinion=None,
            flexible_pq=(),
            flexible_mass=0.0,
            rate_exponent=None,
            prefactor=settings.LIMIT_PREFACTOR,
        )
    return LimitDistribution(
        stubborn_groups=cfg.stubborn_groups,
        stubborn_mass=cfg.alpha0,
        flexible_opinion=stats.m00,
        flexible_pq=tuple((g.weight, g.p, g.q) for g in cfg.flexible_groups),
        flexible_mass=1.0 - cfg.alpha0,
        rate_exponent=stats.eps0 * cfg.alpha0 * stats.mean_p_stubborn,
        prefactor=settings.LIMIT_PREFACTOR,
    )

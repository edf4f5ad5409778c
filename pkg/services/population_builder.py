import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from core.errors import ScenarioError
from models.agent import GroupSpec, OpinionDist
from models.population import PopulationState
from models.scenario import ScenarioConfig, ScenarioStats

logger = logging.getLogger(__name__)


def allocate_counts(weights: Sequence[float], total: int) -> List[int]:
    """Split `total` proportionally to `weights` with largest-remainder rounding."""
    quotas = [w * total for w in weights]
    counts = [int(math.floor(quota)) for quota in quotas]
    leftover = total - sum(counts)
    # ties go to the earlier group
    by_remainder = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in by_remainder[:leftover]:
        counts[i] += 1
    return counts


def stubborn_head_count(cfg: ScenarioConfig) -> int:
    return int(math.floor(cfg.alpha0 * cfg.n_agents + 0.5))


def build_population(cfg: ScenarioConfig, rng: Optional[np.random.Generator] = None) -> PopulationState:
    """
    Sample the initial population of a scenario.

    Exactly round(alpha0 * N) agents are stubborn; both subpopulations are split
    across their groups by largest remainder, and opinions are drawn i.i.d.
    from each group's law. Stubborn agents come first in the arrays.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    n_stubborn = stubborn_head_count(cfg)
    n_flexible = cfg.n_agents - n_stubborn

    w_parts, p_parts, q_parts, g_parts = [], [], [], []
    for name, groups, head_count in (
        ("stubborn", cfg.stubborn_groups, n_stubborn),
        ("flexible", cfg.flexible_groups, n_flexible),
    ):
        mass = cfg.alpha0 if name == "stubborn" else 1.0 - cfg.alpha0
        if mass == 0.0 or not groups:
            continue
        counts = allocate_counts([g.weight for g in groups], head_count)
        for index, (group, count) in enumerate(zip(groups, counts)):
            if count == 0:
                raise ScenarioError(
                    f"group starved: {name} group {index} (weight {group.weight}) "
                    f"gets no agents with n_agents={cfg.n_agents}",
                    field="n_agents",
                )
            w_parts.append(group.w0.sample(rng, count))
            p_parts.append(np.full(count, group.p))
            q_parts.append(np.full(count, group.q))
            g_parts.append(np.full(count, index, dtype=np.int64))

    logger.info(f"Built population: {n_stubborn} stubborn, {n_flexible} flexible agents")
    return PopulationState(
        w=np.concatenate(w_parts),
        p=np.concatenate(p_parts),
        q=np.concatenate(q_parts),
        group=np.concatenate(g_parts),
        gamma=cfg.gamma,
        rng=rng,
        flexible_weights=tuple(g.weight for g in cfg.flexible_groups),
    )


def scenario_stats(cfg: ScenarioConfig, with_limit: bool = True) -> ScenarioStats:
    """
    Closed-form moments from group weights and exact opinion-law means.

    With `with_limit`, the stubborn persuasion-weighted mean opinion m00 is
    required and a scenario without stubborn mass is an error.
    """
    mean_p_stubborn = math.fsum(g.weight * g.p for g in cfg.stubborn_groups)
    mean_p_flexible = math.fsum(g.weight * g.p for g in cfg.flexible_groups)
    mean_p = cfg.alpha0 * mean_p_stubborn + (1.0 - cfg.alpha0) * mean_p_flexible

    m00: Optional[float] = None
    if cfg.alpha0 == 0.0:
        if with_limit:
            raise ScenarioError("no stubborn mass", field="alpha0")
    elif mean_p_stubborn == 0.0:
        if with_limit:
            raise ScenarioError("zero stubborn persuasion: m00 is undefined", field="p")
    else:
        weighted = math.fsum(g.weight * g.p * g.w0.mean() for g in cfg.stubborn_groups)
        m00 = weighted / mean_p_stubborn

    return ScenarioStats(
        mean_p=mean_p,
        mean_p_stubborn=mean_p_stubborn,
        eps0=cfg.effective_eps0,
        m00=m00,
    )


def discretize_q_range(
    weight: float,
    q_low: float,
    q_high: float,
    n_bins: int,
    w0: OpinionDist,
    p: Optional[float] = None,
) -> List[GroupSpec]:
    """
    Replace a flexible block with q ~ U[q_low, q_high] by equal-mass midpoint bins.

    With `p=None` each bin gets p = 1 - q.
    """
    if not (0.0 < q_low <= q_high <= 1.0):
        raise ScenarioError(f"q range ({q_low}, {q_high}) must satisfy 0 < a <= b <= 1", field="q")
    width = (q_high - q_low) / n_bins
    groups = []
    for k in range(n_bins):
        q_mid = q_low + (k + 0.5) * width
        groups.append(
            GroupSpec(weight=weight / n_bins, p=1.0 - q_mid if p is None else p, q=q_mid, w0=w0)
        )
    return groups

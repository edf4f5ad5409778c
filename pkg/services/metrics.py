import logging
import math
from typing import Dict, Optional, Sequence, Union

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from core.errors import MetricsError
from models.meanfield import QuantileProfile
from models.population import PopulationSnapshot, PopulationState, Subset
from models.series import DecayFit, TimeSeriesRow, WeightedSample1D

logger = logging.getLogger(__name__)

Population = Union[PopulationState, PopulationSnapshot]


def w1(mu: WeightedSample1D, nu: WeightedSample1D) -> float:
    """
    Wasserstein-1 distance between two discrete measures on the line.

    Integrates |F_mu - F_nu| over the merged breakpoints of both supports.
    """
    mu = mu.sorted()
    nu = nu.sorted()
    all_values = np.sort(np.concatenate((mu.values, nu.values)))
    deltas = np.diff(all_values)

    mu_cumweights = np.concatenate(([0.0], np.cumsum(mu.weights)))
    nu_cumweights = np.concatenate(([0.0], np.cumsum(nu.weights)))
    mu_cdf = mu_cumweights[np.searchsorted(mu.values, all_values[:-1], side="right")]
    nu_cdf = nu_cumweights[np.searchsorted(nu.values, all_values[:-1], side="right")]

    return float(np.sum(np.abs(mu_cdf - nu_cdf) * deltas))


def w1_to_dirac(sample: WeightedSample1D, c: float) -> float:
    """W1 to a point mass has the closed form sum_i weight_i |w_i - c|."""
    return float(np.dot(sample.weights, np.abs(sample.values - c)))


def _subset_mask(source: Population, subset: Subset) -> NDArray[np.bool_]:
    if subset is Subset.STUBBORN:
        return source.stubborn_mask
    if subset is Subset.FLEXIBLE:
        return source.flexible_mask
    return np.ones(source.w.shape[0], dtype=bool)


def weighted_mean(w: NDArray[np.float64], p: NDArray[np.float64]) -> float:
    """Persuasion-weighted mean sum(p w) / sum(p)."""
    total = float(np.sum(p))
    if total == 0.0:
        raise MetricsError("zero total persuasion")
    return float(np.dot(p, w)) / total


def weighted_mean_opinion(source: Population, subset: Subset = Subset.ALL) -> float:
    """Weighted mean opinion m_t with weight p / <p> over the requested subset."""
    mask = _subset_mask(source, subset)
    return weighted_mean(source.w[mask], source.p[mask])


def group_opinions(source: Population) -> Dict[int, NDArray[np.float64]]:
    """Opinions of the flexible agents, keyed by flexible group index."""
    flexible = source.flexible_mask
    w = source.w[flexible]
    group = source.group[flexible]
    return {int(i): w[group == i] for i in np.unique(group)}


def _group_weights(source: Population, weights: Optional[Sequence[float]]) -> Dict[int, float]:
    groups = group_opinions(source)
    if weights is None:
        total = sum(values.size for values in groups.values())
        return {i: values.size / total for i, values in groups.items()}
    return {i: weights[i] for i in groups}


def w1_to_limit(source: Population, m00: float, weights: Optional[Sequence[float]] = None) -> float:
    """
    Mixture bound on the distance from the flexible population to its limit.

    Returns sum_i alpha_i * W1(group i opinions, delta_{m00}), where alpha_i are
    the configured flexible group weights (empirical fractions if not given).
    """
    groups = group_opinions(source)
    if not groups:
        return 0.0
    alphas = _group_weights(source, weights)
    return math.fsum(alphas[i] * float(np.mean(np.abs(values - m00))) for i, values in groups.items())


def mixture_w1(
    source: Population,
    profiles: Sequence[QuantileProfile],
    weights: Sequence[float],
) -> float:
    """
    Mixture W1 between Monte Carlo group marginals and mean-field quantile profiles.

    `profiles` are matched to groups through `QuantileProfile.group`.
    """
    groups = group_opinions(source)
    total = 0.0
    for profile in profiles:
        values = groups.get(profile.group)
        if values is None:
            continue
        total += weights[profile.group] * w1(WeightedSample1D.from_values(values), profile.to_sample())
    return total


def fit_decay_rate(
    t: Sequence[float],
    d: Sequence[float],
    floor: float,
) -> DecayFit:
    """
    Fit d(t) ~ C exp(-rate t) by least squares on log d, using only d(t) > floor.
    """
    t = np.asarray(t, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    keep = np.isfinite(d) & (d > floor)
    if np.count_nonzero(keep) < 3:
        raise MetricsError("insufficient points above floor")

    fit = stats.linregress(t[keep], np.log(d[keep]))
    return DecayFit(
        rate=max(0.0, -float(fit.slope)),
        prefactor=float(np.exp(fit.intercept)),
        r_squared=float(fit.rvalue) ** 2,
        n_points=int(np.count_nonzero(keep)),
    )


def noise_floor(source: Population) -> float:
    """Monte Carlo floor 2 / sqrt(mean flexible group size)."""
    groups = group_opinions(source)
    if not groups:
        return 0.0
    mean_size = sum(values.size for values in groups.values()) / len(groups)
    return 2.0 / math.sqrt(mean_size)


def observe(
    snapshot: PopulationSnapshot,
    m00: Optional[float],
    weights: Sequence[float],
) -> TimeSeriesRow:
    """Reduce a snapshot to one row of the recorded time series."""
    n_groups = len(weights)
    groups = group_opinions(snapshot)
    means = tuple(float(np.mean(groups[i])) if i in groups else math.nan for i in range(n_groups))
    diameters = tuple(float(np.ptp(groups[i])) if i in groups else math.nan for i in range(n_groups))

    try:
        m_t = weighted_mean_opinion(snapshot)
    except MetricsError:
        m_t = math.nan

    if m00 is None:
        max_error = math.nan
        distance = math.nan
    else:
        errors = [abs(mean - m00) for mean in means if not math.isnan(mean)]
        max_error = max(errors) if errors else 0.0
        distance = w1_to_limit(snapshot, m00, weights)

    return TimeSeriesRow(
        tau=snapshot.tau,
        m_t=m_t,
        max_abs_mean_error=max_error,
        w1_to_limit=distance,
        min_w=float(np.min(snapshot.w)),
        max_w=float(np.max(snapshot.w)),
        group_means=means,
        group_diameters=diameters,
    )


def convergence_time(times: Sequence[float], distances: Sequence[float], threshold: float) -> float:
    """First time with distance < threshold, or inf when it never gets there."""
    below = np.flatnonzero(np.asarray(distances, dtype=np.float64) < threshold)
    if below.size == 0:
        return math.inf
    return float(np.asarray(times, dtype=np.float64)[below[0]])

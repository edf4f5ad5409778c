import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from core.errors import MetricsError
from models.meanfield import QuantileProfile
from models.population import PopulationState, Subset
from models.series import TimeSeries, TimeSeriesRow, WeightedSample1D
from services.collision_sim import collision_simulator
from services.meanfield_solver import limit_distribution
from services.metrics import (
    convergence_time,
    fit_decay_rate,
    mixture_w1,
    noise_floor,
    w1,
    w1_to_dirac,
    w1_to_limit,
    weighted_mean_opinion,
)
from services.population_builder import build_population


def random_sample(rng, max_atoms=8):
    n = int(rng.integers(1, max_atoms + 1))
    weights = rng.random(n) + 1e-3
    return WeightedSample1D(rng.uniform(-1.0, 1.0, n), weights / weights.sum())


def transport_lp(mu, nu):
    """Optimal transport cost by brute-force linear programming over couplings."""
    n, m = mu.values.size, nu.values.size
    cost = np.abs(mu.values[:, None] - nu.values[None, :]).ravel()
    rows = np.kron(np.eye(n), np.ones(m))
    cols = np.kron(np.ones(n), np.eye(m))
    result = linprog(
        cost,
        A_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([mu.weights, nu.weights]),
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-12, "dual_feasibility_tolerance": 1e-12},
    )
    assert result.status == 0
    return result.fun


def make_state(w, p, q, group=None):
    w = np.asarray(w, dtype=float)
    return PopulationState(
        w=w,
        p=np.asarray(p, dtype=float),
        q=np.asarray(q, dtype=float),
        group=np.zeros(w.size, dtype=np.int64) if group is None else np.asarray(group),
        gamma=0.1,
        rng=np.random.default_rng(0),
    )


def test_w1_between_point_masses():
    assert w1(WeightedSample1D.dirac(-0.3), WeightedSample1D.dirac(0.6)) == pytest.approx(0.9)
    assert w1(WeightedSample1D.dirac(0.2), WeightedSample1D.dirac(0.2)) == 0.0


def test_w1_split_mass_to_center():
    """Test W1 when one atom absorbs two half masses."""
    mu = WeightedSample1D(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    assert w1(mu, WeightedSample1D.dirac(0.0)) == 1.0


def test_w1_matches_linear_program():
    """Test the CDF sweep against a transport linear program."""
    rng = np.random.default_rng(30)
    for _ in range(1000):
        mu, nu = random_sample(rng), random_sample(rng)
        assert abs(w1(mu, nu) - transport_lp(mu, nu)) <= 1e-10


def test_w1_is_a_metric():
    """Test symmetry, identity and triangle inequality."""
    rng = np.random.default_rng(31)
    for _ in range(500):
        mu, nu, xi = random_sample(rng), random_sample(rng), random_sample(rng)
        assert w1(mu, nu) == w1(nu, mu)
        assert w1(mu, mu) == 0.0
        assert w1(mu, nu) <= w1(mu, xi) + w1(xi, nu) + 1e-10


def test_w1_handles_unsorted_and_repeated_atoms():
    mu = WeightedSample1D(np.array([0.5, -0.5, 0.5]), np.array([0.25, 0.5, 0.25]))
    nu = WeightedSample1D(np.array([-0.5, 0.5]), np.array([0.5, 0.5]))
    assert w1(mu, nu) == 0.0


def test_dirac_closed_form():
    """Test W1 to a point mass against its closed form."""
    rng = np.random.default_rng(32)
    for _ in range(200):
        mu = random_sample(rng)
        c = float(rng.uniform(-1.0, 1.0))
        expected = float(np.sum(mu.weights * np.abs(mu.values - c)))
        assert w1(mu, WeightedSample1D.dirac(c)) == pytest.approx(expected, abs=1e-15)
        assert w1_to_dirac(mu, c) == pytest.approx(expected, abs=1e-15)


def _best_lipschitz_value(mu, nu):
    """Max of integral phi d(mu - nu) over 1-Lipschitz phi with slopes +-1 between atoms."""
    points = np.unique(np.concatenate((mu.values, nu.values)))
    gaps = np.diff(points)
    best = -math.inf
    for slopes in itertools.product((-1.0, 1.0), repeat=gaps.size):
        phi = np.concatenate(([0.0], np.cumsum(np.asarray(slopes) * gaps)))
        value = np.dot(mu.weights, np.interp(mu.values, points, phi)) - np.dot(nu.weights, np.interp(nu.values, points, phi))
        best = max(best, value)
    return best


def test_kantorovich_duality_spot_check():
    """Test that Lipschitz test functions reach the primal optimum."""
    rng = np.random.default_rng(33)
    for _ in range(100):
        mu, nu = random_sample(rng, 4), random_sample(rng, 4)
        primal = transport_lp(mu, nu)
        dual = _best_lipschitz_value(mu, nu)
        assert dual <= primal + 1e-10
        assert dual >= primal - 1e-8


def test_weighted_sample_validation():
    with pytest.raises(MetricsError):
        WeightedSample1D(np.array([0.0, 1.0]), np.array([0.5, 0.4]))
    with pytest.raises(MetricsError):
        WeightedSample1D(np.array([0.0, 1.0]), np.array([1.5, -0.5]))
    with pytest.raises(MetricsError):
        WeightedSample1D(np.array([]), np.array([]))
    sample = WeightedSample1D.from_values(np.array([0.4, -0.2, 0.1]))
    assert sample.sorted().values.tolist() == [-0.2, 0.1, 0.4]
    assert sample.mean() == pytest.approx(0.1)


def test_weighted_mean_with_equal_persuasion_is_plain_mean():
    state = make_state([0.1, -0.4, 0.9], [0.3, 0.3, 0.3], [0.5, 0.5, 0.5])
    assert weighted_mean_opinion(state) == pytest.approx(0.2)


def test_zero_persuasion_agent_is_ignored():
    """Test that agents with p = 0 carry no weight."""
    state = make_state([1.0, 0.0], [1.0, 0.0], [0.5, 0.5])
    assert weighted_mean_opinion(state) == 1.0


def test_stubborn_weighted_mean_of_two_camps():
    """Test the stubborn weighted mean of the shipped camps."""
    # one agent per third of stubborn mass, sitting at its camp's mean opinion
    state = make_state([-0.7, 0.6, 0.6, 0.3], [0.6, 0.2, 0.2, 0.9], [0.0, 0.0, 0.0, 0.5])
    assert weighted_mean_opinion(state, Subset.STUBBORN) == pytest.approx(-0.18, abs=1e-15)


def test_zero_total_persuasion():
    state = make_state([0.5, -0.5], [0.0, 0.0], [0.5, 0.5])
    with pytest.raises(MetricsError, match="zero total persuasion"):
        weighted_mean_opinion(state)


def test_fit_exact_exponential():
    """Test the rate fit on exact log-linear data."""
    t = np.linspace(0.0, 10.0, 21)
    fit = fit_decay_rate(t, np.exp(-0.5 * t), floor=1e-9)
    assert fit.rate == pytest.approx(0.5, abs=1e-12)
    assert fit.prefactor == pytest.approx(1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.n_points == 21


def test_fit_slow_exponential():
    t = np.arange(0.0, 201.0, 10.0)
    fit = fit_decay_rate(t, 3.0 * np.exp(-0.04 * t), floor=1e-9)
    assert fit.rate == pytest.approx(0.04, abs=1e-12)
    assert fit.prefactor == pytest.approx(3.0, rel=1e-12)


def test_fit_is_scale_equivariant():
    """Test that scaling the data only scales the prefactor."""
    rng = np.random.default_rng(34)
    t = np.linspace(0.0, 50.0, 40)
    d = 0.8 * np.exp(-0.1 * t) * np.exp(rng.normal(0.0, 0.05, t.size))
    base = fit_decay_rate(t, d, floor=1e-6)
    scaled = fit_decay_rate(t, 7.5 * d, floor=7.5e-6)
    assert scaled.rate == pytest.approx(base.rate, abs=1e-10)
    assert scaled.prefactor == pytest.approx(7.5 * base.prefactor, rel=1e-10)


def test_fit_ignores_points_below_floor():
    t = np.arange(6.0)
    d = np.array([1.0, 0.5, 0.25, 1e-4, 1e-5, 0.0])
    fit = fit_decay_rate(t, d, floor=1e-3)
    assert fit.n_points == 3
    assert fit.rate == pytest.approx(math.log(2.0))


def test_fit_needs_three_points():
    with pytest.raises(MetricsError, match="insufficient points above floor"):
        fit_decay_rate([0.0, 1.0, 2.0], [1.0, 0.5, 1e-6], floor=1e-3)


def test_distance_to_limit_at_consensus():
    state = make_state([-0.5, 0.2, 0.2, 0.2], [0.4, 0.5, 0.5, 0.5], [0.0, 0.3, 0.6, 0.9], group=[0, 0, 0, 0])
    assert w1_to_limit(state, 0.2) == 0.0


def test_distance_to_limit_symmetric_atoms():
    m00, h = -0.18, 0.3
    state = make_state([m00 - h, m00 + h], [0.5, 0.5], [0.5, 0.5])
    assert w1_to_limit(state, m00) == pytest.approx(h)


def test_distance_to_limit_matches_per_group_w1(two_camps_config):
    """Test the mixture distance against per-group W1 sums."""
    state = build_population(two_camps_config)
    collision_simulator.advance(state, 200_000, two_camps_config.gamma, two_camps_config.sigma, two_camps_config.noise)
    m00 = -0.18
    weights = [g.weight for g in two_camps_config.flexible_groups]
    flexible = state.flexible_mask
    expected = 0.0
    for index, weight in enumerate(weights):
        values = state.w[flexible & (state.group == index)]
        expected += weight * w1(WeightedSample1D.from_values(values), WeightedSample1D.dirac(m00))
    assert w1_to_limit(state, m00, weights) == pytest.approx(expected, abs=1e-12)
    # equal group sizes make the empirical fractions coincide with the weights
    assert w1_to_limit(state, m00) == pytest.approx(expected, abs=1e-12)


def test_mixture_distance_vanishes_on_matching_profiles():
    values = np.array([-0.3, 0.1, 0.4, 0.8])
    state = make_state(np.concatenate(([0.0], values)), [0.5] * 5, [0.0, 0.5, 0.5, 0.5, 0.5])
    levels = np.array([0.125, 0.375, 0.625, 0.875, 1.0])
    profile = QuantileProfile(group=0, q=0.5, levels=levels, values=np.append(values, 0.8))
    assert mixture_w1(state, [profile], [1.0]) == 0.0
    shifted = profile.with_values(profile.values + 0.1)
    assert mixture_w1(state, [shifted], [1.0]) == pytest.approx(0.1)


def test_noise_floor_uses_mean_group_size(two_camps_config):
    state = build_population(two_camps_config)
    assert noise_floor(state) == pytest.approx(2.0 / math.sqrt(250))


def test_convergence_time():
    """Test first-passage time and the never-converged sentinel."""
    times = [0.0, 1.0, 2.0, 3.0]
    assert convergence_time(times, [0.5, 0.2, 0.04, 0.01], 0.05) == 2.0
    assert convergence_time(times, [0.5, 0.2, 0.1, 0.06], 0.05) == math.inf
    assert convergence_time(times, [0.5, 0.2, 0.1, 0.06], 0.6) == 0.0


def test_time_series_rejects_non_increasing_tau():
    series = TimeSeries(n_groups=1)
    row = TimeSeriesRow(1.0, 0.0, 0.0, 0.0, -1.0, 1.0, (0.0,), (0.0,))
    series.append(row)
    with pytest.raises(MetricsError):
        series.append(row)
    assert series.columns() == [
        "tau", "m_t", "max_abs_mean_error", "w1_to_limit", "min_w", "max_w", "mean_g0", "diam_g0"
    ]


@pytest.mark.slow
def test_fitted_rate_on_reference_run_beats_guaranteed_rate(two_camps_config):
    """Test the fitted decay of a full Monte Carlo run against the guaranteed exponent."""
    cfg = two_camps_config.with_overrides(tau_end=100.0)
    result = collision_simulator.run(build_population(cfg), cfg)
    fit = fit_decay_rate(
        result.series.taus,
        result.series.column("w1_to_limit"),
        floor=noise_floor(result.state),
    )
    guaranteed = limit_distribution(cfg).rate_exponent
    assert guaranteed == pytest.approx(0.04)
    assert fit.rate >= 0.8 * guaranteed

import logging
import math

import numpy as np
import pandas as pd
import pytest

from core.errors import ScenarioError
from models.agent import GroupSpec, OpinionDist
from services.collision_sim import collision_simulator
from services.config_parser import parse_config
from services.experiment_service import experiment_service, scaled_sigma


def read_csv(path):
    return pd.read_csv(path, float_precision="round_trip")


def test_simulate_writes_outputs(small_config, tmp_path):
    """Test files and headers written by a simulation."""
    result = experiment_service.simulate(small_config, tmp_path)

    lines = (tmp_path / "timeseries.csv").read_text().splitlines()
    assert lines[0] == "tau,m_t,max_abs_mean_error,w1_to_limit,min_w,max_w,mean_g0,mean_g1,diam_g0,diam_g1"
    assert len(lines) == 1 + len(result.series) == 7

    densities = sorted(tmp_path.glob("density_*.csv"))
    assert [path.name for path in densities] == [f"density_{k:04d}.csv" for k in range(4)]
    first = densities[0].read_text().splitlines()
    assert first[0] == "# tau=0 subset=flexible n_w=50 n_q=16"
    assert len(first) == 51
    assert len(first[1].split(",")) == 16

    assert list(tmp_path.glob("manifest*")) == [tmp_path / "manifest.txt"]


def test_simulate_is_byte_reproducible(small_config, tmp_path):
    """Test byte-identical outputs for the same scenario."""
    experiment_service.simulate(small_config, tmp_path / "a")
    experiment_service.simulate(small_config, tmp_path / "b")
    for name in ["timeseries.csv"] + [f"density_{k:04d}.csv" for k in range(4)]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest_reproduces_the_run(small_config, tmp_path):
    """Test that a manifest parses back to its scenario."""
    experiment_service.simulate(small_config, tmp_path / "first")
    manifest = (tmp_path / "first" / "manifest.txt").read_text()
    assert "# command = simulate" in manifest
    assert f"# seed = {small_config.seed}" in manifest
    assert "# noise_rejections = 0" in manifest

    replayed = parse_config(manifest)
    assert replayed == small_config
    experiment_service.simulate(replayed, tmp_path / "second")
    assert (tmp_path / "first" / "timeseries.csv").read_bytes() == (tmp_path / "second" / "timeseries.csv").read_bytes()


def test_zero_horizon_simulation(small_config, tmp_path):
    experiment_service.simulate(small_config.with_overrides(tau_end=0.0), tmp_path)
    frame = read_csv(tmp_path / "timeseries.csv")
    assert len(frame) == 1
    assert frame["tau"].tolist() == [0.0]
    assert [path.name for path in tmp_path.glob("density_*.csv")] == ["density_0000.csv"]


def test_density_snapshots_follow_records_actually_taken(small_config, tmp_path):
    """Test that skipped records still leave four evenly spread density files."""
    # one event advances tau by 5e-4, far more than record_every
    cfg = small_config.with_overrides(tau_end=5e-3, record_every=1e-4)
    result = experiment_service.simulate(cfg, tmp_path)
    assert len(result.series) == 11

    densities = sorted(tmp_path.glob("density_*.csv"))
    assert len(densities) == 4
    taus = [float(path.read_text().split()[1].split("=")[1]) for path in densities]
    assert taus[0] == 0.0
    assert taus[-1] == pytest.approx(cfg.tau_end)
    assert taus == sorted(taus)


def test_meanfield_writes_outputs(small_config, tmp_path):
    """Test files and headers written by a mean-field solve."""
    result = experiment_service.meanfield(small_config, tmp_path)

    frame = read_csv(tmp_path / "meanfield.csv")
    assert list(frame.columns) == ["t", "m_t", "bound", "M_g0", "M_g1"]
    assert frame["bound"].iloc[0] == 4.0
    assert frame["t"].iloc[-1] == pytest.approx(small_config.tau_end)

    quantiles = read_csv(tmp_path / "quantiles.csv")
    assert list(quantiles.columns) == ["group", "r", "X"]
    assert len(quantiles) == 2 * (small_config.quantile_points + 1)

    limit = (tmp_path / "limit.txt").read_text().splitlines()
    assert limit[0] == f"m00 = {result.system.m00:.17g}"
    assert result.system.m00 == pytest.approx(-0.375)
    assert (tmp_path / "manifest.txt").exists()


def test_meanfield_equilibrium_start_is_constant(small_config, tmp_path):
    at_limit = OpinionDist.point(-0.375)
    cfg = small_config.with_overrides(
        flexible_groups=tuple(
            GroupSpec(g.weight, g.p, g.q, at_limit) for g in small_config.flexible_groups
        )
    )
    experiment_service.meanfield(cfg, tmp_path)
    frame = read_csv(tmp_path / "meanfield.csv")
    for column in ("M_g0", "M_g1", "m_t"):
        assert np.allclose(frame[column], -0.375, rtol=0, atol=1e-14)


def test_meanfield_scalar_closed_form(small_config, tmp_path):
    cfg = small_config.with_overrides(
        stubborn_groups=(GroupSpec(1.0, 0.4, 0.0, OpinionDist.point(0.0)),),
        flexible_groups=(GroupSpec(1.0, 0.3, 1.0, OpinionDist.point(1.0)),),
        dt_meanfield=0.01,
    )
    experiment_service.meanfield(cfg, tmp_path)
    frame = read_csv(tmp_path / "meanfield.csv")
    # rate q alpha0 <p>_(q=0) = 1 * 0.5 * 0.4
    expected = np.exp(-0.2 * frame["t"].to_numpy())
    assert np.allclose(frame["M_g0"], expected, rtol=0, atol=1e-8)


def test_meanfield_requires_stubborn_mass(small_config, tmp_path):
    with pytest.raises(ValueError, match="alpha0 zero"):
        experiment_service.meanfield(small_config.with_overrides(alpha0=0.0), tmp_path)


def test_compare_writes_grazing_table(small_config, tmp_path):
    frame = experiment_service.compare(small_config, [0.1, 0.05], tmp_path)
    written = read_csv(tmp_path / "grazing.csv")
    assert list(written.columns) == ["gamma", "sigma", "n_agents", "seed", "sup_w1"]
    assert written["gamma"].tolist() == [0.1, 0.05]
    assert np.all(written["sup_w1"] >= 0.0)
    assert frame["sup_w1"].tolist() == written["sup_w1"].tolist()


def test_compare_same_gamma_twice_gives_identical_rows(small_config, tmp_path):
    frame = experiment_service.compare(small_config, [0.05, 0.05], tmp_path)
    assert frame.iloc[0].tolist() == frame.iloc[1].tolist()


def test_compare_expands_seeds_and_sigma(small_config, tmp_path, mocker):
    """Test seed and noise expansion of the grazing table."""
    mocker.patch("services.experiment_service._grazing_point", return_value=(0.25, 10, 2))
    frame = experiment_service.compare(small_config, [0.1, 0.05], tmp_path, seeds=2, sigma_scaling="gamma15")
    assert frame["seed"].tolist() == [7, 8, 7, 8]
    assert frame["sigma"].tolist() == pytest.approx([0.1**0.75, 0.1**0.75, 0.05**0.75, 0.05**0.75])
    assert "# events = 40" in (tmp_path / "manifest.txt").read_text()
    assert "# noise_rejections = 8" in (tmp_path / "manifest.txt").read_text()


def test_compare_point_mass_start_stays_within_sampling_floor(small_config, tmp_path):
    """Test that a Dirac start at the stubborn opinion never leaves the sampling floor."""
    at_rest = OpinionDist.point(0.3)
    cfg = small_config.with_overrides(
        stubborn_groups=(GroupSpec(1.0, 0.5, 0.0, at_rest),),
        flexible_groups=(GroupSpec(1.0, 0.4, 0.6, at_rest),),
    )
    frame = experiment_service.compare(cfg, [0.1, 0.05], tmp_path)
    floor = 2.0 / math.sqrt(cfg.n_agents * (1.0 - cfg.alpha0))
    assert np.all(frame["sup_w1"] <= floor)


def test_compare_validates_gammas(small_config, tmp_path):
    with pytest.raises(ScenarioError):
        experiment_service.compare(small_config, [0.05], tmp_path)
    with pytest.raises(ScenarioError):
        experiment_service.compare(small_config, [0.05, 0.1], tmp_path)


def test_scaled_sigma():
    assert scaled_sigma(0.01, "zero") == 0.0
    assert scaled_sigma(0.01, "gamma15") ** 2 == pytest.approx(0.01**1.5)
    with pytest.raises(ScenarioError):
        scaled_sigma(0.01, "gamma2")


def test_sweep_single_value_single_row(small_config, tmp_path, mocker):
    spy = mocker.spy(collision_simulator, "run")
    frame = experiment_service.sweep(small_config, "alpha0", [0.5], tmp_path)
    assert spy.call_count == 1
    written = read_csv(tmp_path / "sweep.csv")
    assert list(written.columns) == ["param", "value", "seed", "tau_star", "fitted_rate", "guaranteed_rate"]
    assert len(written) == len(frame) == 1
    # eps0 * alpha0 * <p>_(q=0) = 0.5 * 0.5 * 0.4
    assert written["guaranteed_rate"].iloc[0] == pytest.approx(0.1)


def test_sweep_threshold_above_start_converges_at_once(small_config, tmp_path):
    frame = experiment_service.sweep(small_config, "alpha0", [0.3, 0.5], tmp_path, threshold=10.0)
    assert frame["tau_star"].tolist() == [0.0, 0.0]


def test_sweep_marks_runs_that_never_converge(small_config, tmp_path, caplog):
    """Test the inf sentinel for runs that never converge."""
    with caplog.at_level(logging.WARNING):
        frame = experiment_service.sweep(small_config, "gamma", [0.05], tmp_path, threshold=1e-9)
    assert math.isinf(frame["tau_star"].iloc[0])
    assert "never converged" in caplog.text
    assert read_csv(tmp_path / "sweep.csv")["tau_star"].tolist() == [math.inf]


def test_sweep_casts_agent_counts(small_config, tmp_path):
    frame = experiment_service.sweep(small_config, "n_agents", [100, 200], tmp_path, seeds=2)
    assert frame["value"].tolist() == [100.0, 100.0, 200.0, 200.0]
    assert frame["seed"].tolist() == [7, 8, 7, 8]


def test_sweep_rejects_unknown_parameter(small_config, tmp_path):
    with pytest.raises(ScenarioError):
        experiment_service.sweep(small_config, "noise", [1.0], tmp_path)


def test_verify(two_camps_config):
    assert experiment_service.verify(two_camps_config).passed


@pytest.mark.slow
def test_grazing_distance_shrinks_with_gamma(two_camps_config, tmp_path):
    """Test that smaller gamma tracks the mean-field flow more closely."""
    cfg = two_camps_config.with_overrides(n_agents=100_000, tau_end=20.0)
    frame = experiment_service.compare(cfg, [0.1, 0.05, 0.01], tmp_path, seeds=5)
    medians = frame.groupby("gamma", sort=False)["sup_w1"].median().tolist()
    assert medians[0] >= medians[1] >= medians[2]
    assert medians[2] <= 0.03


@pytest.mark.slow
def test_more_stubborn_agents_converge_sooner(two_camps_config, tmp_path):
    """Test that convergence time drops as stubborn mass grows."""
    frame = experiment_service.sweep(two_camps_config, "alpha0", [0.2, 0.4, 0.6], tmp_path, seeds=5)
    medians = frame.groupby("value", sort=False)["tau_star"].median().tolist()
    assert medians[0] > medians[1] > medians[2]

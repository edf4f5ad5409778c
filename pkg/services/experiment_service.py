import logging
import math
import time
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from core.config import settings
from core.errors import MetricsError, ScenarioError
from models.meanfield import MeanFieldResult, QuantileProfile
from models.population import PopulationSnapshot, SimulationResult, Subset
from models.run import RunManifest, VerificationReport
from models.scenario import ScenarioConfig
from services.collision_sim import collision_simulator, record_schedule
from services.config_parser import emit_config
from services.meanfield_solver import (
    assemble,
    default_dt,
    flow_quantiles,
    initial_profiles,
    limit_distribution,
    solve_means,
)
from services.metrics import convergence_time, fit_decay_rate, mixture_w1, noise_floor
from services.population_builder import build_population
from services.results_writer import write_csv, write_density, write_text_atomic
from services.verification import run_checks

logger = logging.getLogger(__name__)

SWEEP_PARAMS = {"alpha0": float, "gamma": float, "sigma": float, "n_agents": int}
SIGMA_SCALINGS = ("zero", "gamma15")

PathLike = Union[str, Path]


def scaled_sigma(gamma: float, scaling: str) -> float:
    """Noise level for a grazing-limit run: 0, or sigma^2 = gamma^1.5."""
    if scaling == "zero":
        return 0.0
    if scaling == "gamma15":
        return gamma ** 0.75
    raise ScenarioError(f"unknown sigma scaling {scaling!r}, expected one of {SIGMA_SCALINGS}", field="sigma")


def _density_indices(n_records: int) -> List[int]:
    """Evenly spaced record indices for density snapshots, always including the last."""
    count = min(settings.DENSITY_SNAPSHOTS, n_records)
    return sorted({int(round(x)) for x in np.linspace(0, n_records - 1, count)})


def _nearest_record(schedule: np.ndarray, tau: float) -> int:
    return int(np.argmin(np.abs(schedule - tau)))


def _grazing_point(
    cfg: ScenarioConfig,
    reference: List[Tuple[QuantileProfile, ...]],
    schedule: np.ndarray,
) -> Tuple[float, int, int]:
    """Sup over records of the mixture W1 between a Monte Carlo run and the mean-field flow."""
    weights = [g.weight for g in cfg.flexible_groups]
    worst = 0.0

    def recorder(snapshot: PopulationSnapshot) -> None:
        nonlocal worst
        profiles = reference[_nearest_record(schedule, snapshot.tau)]
        worst = max(worst, mixture_w1(snapshot, profiles, weights))

    state = build_population(cfg)
    collision_simulator.run(state, cfg, recorder)
    return worst, state.n_events, state.n_rejections


def _sweep_point(cfg: ScenarioConfig, threshold: float) -> Tuple[float, float, float, int, int]:
    """Convergence time, fitted and guaranteed rates of one sweep run."""
    result = collision_simulator.run(build_population(cfg), cfg)
    taus = result.series.taus
    distances = result.series.column("w1_to_limit")
    tau_star = convergence_time(taus, distances, threshold)

    try:
        fitted = fit_decay_rate(taus, distances, floor=noise_floor(result.state)).rate
    except MetricsError:
        fitted = math.nan
    if cfg.alpha0 > 0.0:
        exponent = limit_distribution(cfg).rate_exponent
        guaranteed = math.nan if exponent is None else exponent
    else:
        guaranteed = math.nan
    return tau_star, fitted, guaranteed, result.state.n_events, result.state.n_rejections


class ExperimentService:
    """
    Orchestrates experiments end to end and writes their result files.

    Each command writes into its own output directory, which always ends up
    holding exactly one manifest.
    """

    def _write_manifest(
        self,
        out_dir: Path,
        command: str,
        cfg: ScenarioConfig,
        started: float,
        n_events: int = 0,
        n_rejections: int = 0,
        n_fallbacks: int = 0,
    ) -> RunManifest:
        manifest = RunManifest(
            command=command,
            config=cfg,
            version=settings.VERSION,
            wall_clock_seconds=time.perf_counter() - started,
            n_events=n_events,
            n_rejections=n_rejections,
            n_fallbacks=n_fallbacks,
        )
        write_text_atomic(out_dir / settings.MANIFEST_NAME, manifest.render(emit_config(cfg)))
        return manifest

    def simulate(self, cfg: ScenarioConfig, out_dir: PathLike) -> SimulationResult:
        """Run the Monte Carlo engine; write timeseries.csv, density snapshots and the manifest."""
        out_dir = Path(out_dir)
        started = time.perf_counter()
        # one grid per record actually taken
        grids: List[Tuple[float, np.ndarray]] = []

        def recorder(snapshot: PopulationSnapshot) -> None:
            grid = collision_simulator.density_grid(
                snapshot, settings.DENSITY_W_BINS, settings.DENSITY_Q_BINS, Subset.FLEXIBLE
            )
            grids.append((snapshot.tau, grid))

        result = collision_simulator.run(build_population(cfg), cfg, recorder)

        write_csv(out_dir / "timeseries.csv", result.series.to_frame())
        for number, index in enumerate(_density_indices(len(grids))):
            tau, grid = grids[index]
            write_density(out_dir / f"density_{number:04d}.csv", grid, tau, Subset.FLEXIBLE.value)
        state = result.state
        self._write_manifest(out_dir, "simulate", cfg, started, state.n_events, state.n_rejections, state.n_fallbacks)
        return result

    def meanfield(self, cfg: ScenarioConfig, out_dir: PathLike) -> MeanFieldResult:
        """Solve the group-means system and the quantile flow; write meanfield.csv, quantiles.csv, limit.txt."""
        out_dir = Path(out_dir)
        started = time.perf_counter()
        system = assemble(cfg)
        limit = limit_distribution(cfg)
        dt = default_dt(system, cfg.dt_meanfield)
        trajectory = solve_means(system, t_end=cfg.tau_end, dt=dt)
        flow = flow_quantiles(system, initial_profiles(cfg), trajectory, cfg.tau_end, dt)

        frame = pd.DataFrame({"t": trajectory.times, "m_t": trajectory.m_t})
        frame["bound"] = settings.LIMIT_PREFACTOR * np.exp(-system.rate_exponent * trajectory.times)
        for i in range(system.n_groups):
            frame[f"M_g{i}"] = trajectory.means[:, i]
        write_csv(out_dir / "meanfield.csv", frame)

        quantiles = pd.DataFrame(
            [
                {"group": profile.group, "r": r, "X": x}
                for profile in flow.final
                for r, x in zip(profile.levels, profile.values)
            ],
            columns=["group", "r", "X"],
        )
        write_csv(out_dir / "quantiles.csv", quantiles)

        write_text_atomic(
            out_dir / "limit.txt",
            f"m00 = {system.m00:.17g}\n"
            f"rate_exponent = {system.rate_exponent:.17g}\n"
            f"prefactor = {settings.LIMIT_PREFACTOR:.17g}\n",
        )
        self._write_manifest(out_dir, "meanfield", cfg, started)
        return MeanFieldResult(system=system, trajectory=trajectory, flow=flow, limit=limit)

    def compare(
        self,
        cfg: ScenarioConfig,
        gammas: Sequence[float],
        out_dir: PathLike,
        seeds: int = settings.DEFAULT_SEEDS,
        sigma_scaling: str = "zero",
    ) -> pd.DataFrame:
        """
        Grazing-limit table: for each gamma, the sup over records of the mixture W1
        between the Monte Carlo groups and the mean-field quantile profiles.
        """
        if len(gammas) < 2:
            raise ScenarioError("compare needs at least 2 gammas", field="gamma")
        if any(a < b for a, b in zip(gammas, gammas[1:])):
            raise ScenarioError("gammas must be given in descending order", field="gamma")
        out_dir = Path(out_dir)
        started = time.perf_counter()

        system = assemble(cfg)
        dt = default_dt(system, cfg.dt_meanfield)
        schedule = np.array(record_schedule(cfg.tau_end, cfg.record_every))
        trajectory = solve_means(system, t_end=cfg.tau_end, dt=dt)
        flow = flow_quantiles(system, initial_profiles(cfg), trajectory, cfg.tau_end, dt, sample_times=schedule)

        points = [
            cfg.with_overrides(gamma=gamma, sigma=scaled_sigma(gamma, sigma_scaling), seed=cfg.seed + k)
            for gamma in gammas
            for k in range(seeds)
        ]
        logger.info(f"Comparing {len(points)} Monte Carlo runs against the mean-field flow")
        outcomes = Parallel(n_jobs=settings.n_jobs)(
            delayed(_grazing_point)(point, flow.snapshots, schedule) for point in points
        )

        frame = pd.DataFrame(
            {
                "gamma": [point.gamma for point in points],
                "sigma": [point.sigma for point in points],
                "n_agents": [point.n_agents for point in points],
                "seed": [point.seed for point in points],
                "sup_w1": [outcome[0] for outcome in outcomes],
            }
        )
        write_csv(out_dir / "grazing.csv", frame)
        self._write_manifest(
            out_dir,
            "compare",
            cfg,
            started,
            n_events=sum(outcome[1] for outcome in outcomes),
            n_rejections=sum(outcome[2] for outcome in outcomes),
        )
        return frame

    def sweep(
        self,
        cfg: ScenarioConfig,
        param: str,
        values: Sequence[float],
        out_dir: PathLike,
        threshold: float = settings.CONVERGENCE_THRESHOLD,
        seeds: int = settings.DEFAULT_SEEDS,
    ) -> pd.DataFrame:
        """
        Convergence time tau* (first record with w1_to_limit < threshold) across values of one parameter.

        Runs that never converge get tau_star = inf instead of aborting the sweep.
        """
        if param not in SWEEP_PARAMS:
            raise ScenarioError(f"cannot sweep {param!r}, expected one of {sorted(SWEEP_PARAMS)}", field=param)
        out_dir = Path(out_dir)
        started = time.perf_counter()
        cast = SWEEP_PARAMS[param]

        points = [
            (value, cfg.with_overrides(**{param: cast(value)}, seed=cfg.seed + k))
            for value in values
            for k in range(seeds)
        ]
        logger.info(f"Sweeping {param} over {len(values)} values x {seeds} seeds")
        outcomes = Parallel(n_jobs=settings.n_jobs)(delayed(_sweep_point)(point, threshold) for _, point in points)

        for (value, point), outcome in zip(points, outcomes):
            if math.isinf(outcome[0]):
                logger.warning(f"{param}={value} seed={point.seed} never converged within tau_end={point.tau_end}")

        frame = pd.DataFrame(
            {
                "param": [param] * len(points),
                "value": [float(value) for value, _ in points],
                "seed": [point.seed for _, point in points],
                "tau_star": [outcome[0] for outcome in outcomes],
                "fitted_rate": [outcome[1] for outcome in outcomes],
                "guaranteed_rate": [outcome[2] for outcome in outcomes],
            }
        )
        write_csv(out_dir / "sweep.csv", frame)
        self._write_manifest(
            out_dir,
            "sweep",
            cfg,
            started,
            n_events=sum(outcome[3] for outcome in outcomes),
            n_rejections=sum(outcome[4] for outcome in outcomes),
        )
        return frame

    def verify(self, cfg: ScenarioConfig) -> VerificationReport:
        return run_checks(cfg)


experiment_service = ExperimentService()

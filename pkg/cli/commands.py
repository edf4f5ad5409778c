import logging
from enum import Enum
from pathlib import Path
from typing import List

import typer

from core.config import settings
from core.errors import MeanFieldError, MetricsError, ScenarioError, SimulationError
from services.config_parser import load_config
from services.experiment_service import experiment_service

logger = logging.getLogger(__name__)

app = typer.Typer(help=settings.TOOLKIT_NAME, no_args_is_help=True, add_completion=False)

DOMAIN_ERRORS = (ScenarioError, MeanFieldError, MetricsError, SimulationError, OSError)


class SigmaScaling(str, Enum):
    zero = "zero"
    gamma15 = "gamma15"


def _parse_list(raw: str, name: str) -> List[float]:
    try:
        return [float(item) for item in raw.split(",") if item.strip()]
    except ValueError:
        raise typer.BadParameter(f"{name} must be a comma-separated list of numbers, got {raw!r}")


def _fail(exc: Exception) -> None:
    logger.error(f"{type(exc).__name__}: {exc}")
    typer.echo(f"error: {exc}", err=True)
    raise typer.Exit(code=1)


ConfigOption = typer.Option(..., "--config", exists=True, dir_okay=False, help="Scenario file")
OutOption = typer.Option(..., "--out", file_okay=False, help="Output directory")


@app.command()
def simulate(config: Path = ConfigOption, out: Path = OutOption):
    """Run the Monte Carlo collision engine."""
    try:
        result = experiment_service.simulate(load_config(config), out)
    except DOMAIN_ERRORS as exc:
        _fail(exc)
    final = result.series.rows[-1]
    typer.echo(f"tau={final.tau:.6g} m_t={final.m_t:.6g} w1_to_limit={final.w1_to_limit:.6g}")


@app.command()
def meanfield(config: Path = ConfigOption, out: Path = OutOption):
    """Solve the grazing-limit mean-field dynamics."""
    try:
        result = experiment_service.meanfield(load_config(config), out)
    except DOMAIN_ERRORS as exc:
        _fail(exc)
    typer.echo(
        f"m00={result.system.m00:.6g} rate_exponent={result.system.rate_exponent:.6g} "
        f"m_t(end)={result.trajectory.m_t[-1]:.6g}"
    )


@app.command()
def compare(
    config: Path = ConfigOption,
    out: Path = OutOption,
    gammas: str = typer.Option(..., "--gammas", help="Descending list, e.g. 0.1,0.05,0.01"),
    seeds: int = typer.Option(settings.DEFAULT_SEEDS, "--seeds", min=1),
    sigma_scaling: SigmaScaling = typer.Option(SigmaScaling.zero, "--sigma-scaling"),
):
    """Compare Monte Carlo runs against the mean-field limit for decreasing gamma."""
    try:
        frame = experiment_service.compare(
            load_config(config), _parse_list(gammas, "--gammas"), out, seeds=seeds, sigma_scaling=sigma_scaling.value
        )
    except DOMAIN_ERRORS as exc:
        _fail(exc)
    typer.echo(frame.to_string(index=False))


@app.command()
def sweep(
    config: Path = ConfigOption,
    out: Path = OutOption,
    param: str = typer.Option(..., "--param", help="alpha0, gamma, sigma or n_agents"),
    values: str = typer.Option(..., "--values", help="Comma-separated values"),
    threshold: float = typer.Option(settings.CONVERGENCE_THRESHOLD, "--threshold"),
    seeds: int = typer.Option(settings.DEFAULT_SEEDS, "--seeds", min=1),
):
    """Measure convergence time across values of one parameter."""
    try:
        frame = experiment_service.sweep(
            load_config(config), param, _parse_list(values, "--values"), out, threshold=threshold, seeds=seeds
        )
    except DOMAIN_ERRORS as exc:
        _fail(exc)
    typer.echo(frame.to_string(index=False))


@app.command()
def verify(config: Path = ConfigOption):
    """Run the exact-identity checks; exit code 0 iff all pass."""
    try:
        report = experiment_service.verify(load_config(config))
    except DOMAIN_ERRORS as exc:
        _fail(exc)
    typer.echo(report.render())
    if not report.passed:
        raise typer.Exit(code=1)

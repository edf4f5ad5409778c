import logging
from typing import Optional

import numpy as np

from core.config import settings
from core.errors import MeanFieldError, ScenarioError
from models.meanfield import MeanFieldSystem
from models.run import CheckResult, CheckStatus, VerificationReport
from models.scenario import ScenarioConfig
from models.series import WeightedSample1D
from services.meanfield_solver import assemble, gerschgorin_row_sums, identity_residuals
from services.metrics import w1, w1_to_dirac, weighted_mean
from services.population_builder import scenario_stats

logger = logging.getLogger(__name__)

TRIANGLE_TOLERANCE = 1e-10


def _result(name: str, passed: bool, detail: str) -> CheckResult:
    return CheckResult(name=name, status=CheckStatus.PASS if passed else CheckStatus.FAIL, detail=detail)


def _random_sample(rng: np.random.Generator) -> WeightedSample1D:
    n = int(rng.integers(1, 9))
    weights = rng.random(n) + 1e-3
    return WeightedSample1D(rng.uniform(-1.0, 1.0, n), weights / weights.sum())


def check_w1_properties(seed: int, cases: int = settings.W1_PROPERTY_CASES) -> CheckResult:
    """Symmetry, triangle inequality, zero self-distance and the Dirac closed form."""
    rng = np.random.default_rng(seed)
    worst_triangle = 0.0
    for _ in range(cases):
        mu, nu, xi = (_random_sample(rng) for _ in range(3))
        d_mu_nu = w1(mu, nu)
        if d_mu_nu != w1(nu, mu):
            return _result("W1 metric properties", False, "asymmetric distance")
        if d_mu_nu < 0.0 or w1(mu, mu) != 0.0:
            return _result("W1 metric properties", False, "distance is not a metric on its support")
        worst_triangle = max(worst_triangle, d_mu_nu - w1(mu, xi) - w1(xi, nu))
        c = float(rng.uniform(-1.0, 1.0))
        if abs(w1(mu, WeightedSample1D.dirac(c)) - w1_to_dirac(mu, c)) > settings.IDENTITY_TOLERANCE:
            return _result("W1 metric properties", False, "Dirac closed form mismatch")
    passed = worst_triangle <= TRIANGLE_TOLERANCE
    return _result("W1 metric properties", passed, f"{cases} cases, worst triangle excess {worst_triangle:.3e}")


def run_checks(cfg: ScenarioConfig, system: Optional[MeanFieldSystem] = None) -> VerificationReport:
    """
    Run the exact-identity suite on a scenario.

    `system` overrides the assembled mean-field system, which lets callers
    audit a system obtained elsewhere.
    """
    report = VerificationReport()
    if cfg.alpha0 == 0.0:
        report.checks.append(_result("alpha0 zero", False, "no stubborn mass: the mean-field system is undefined"))
        return report
    if system is None:
        try:
            system = assemble(cfg)
        except (MeanFieldError, ScenarioError) as exc:
            report.checks.append(_result("mean-field assembly", False, str(exc)))
            return report

    tolerance = settings.IDENTITY_TOLERANCE
    for name, residual in identity_residuals(system).items():
        report.checks.append(_result(name, residual <= tolerance, f"max residual {residual:.3e}"))

    sink = system.alpha0 * system.mean_p_stubborn
    row_sums = gerschgorin_row_sums(system)
    row_error = float(np.max(np.abs(row_sums + system.q * sink)))
    bounded = bool(np.all(row_sums <= -system.eps0 * sink + tolerance)) and sink > 0.0
    report.checks.append(
        _result(
            "Gerschgorin row sums",
            row_error <= tolerance and bounded,
            f"max deviation from -q_i alpha0 <p>_(q=0): {row_error:.3e}, max row sum {row_sums.max():.6g}",
        )
    )

    stats = scenario_stats(cfg)
    means = np.array([g.w0.mean() for g in cfg.stubborn_groups])
    pull = np.array([g.weight * g.p for g in cfg.stubborn_groups])
    direct = weighted_mean(means, pull)
    m00_error = max(abs(direct - stats.m00), abs(direct - system.m00))
    report.checks.append(_result("m₀⁰ arithmetic", m00_error <= tolerance, f"m00={stats.m00:.17g}, deviation {m00_error:.3e}"))

    report.checks.append(check_w1_properties(cfg.seed))

    if report.passed:
        logger.info("All verification checks passed")
    else:
        logger.error(f"Verification failed at: {report.first_failure.name}")
    return report

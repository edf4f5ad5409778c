from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

from models.scenario import ScenarioConfig


@dataclass(frozen=True)
class RunManifest:
    """
    Provenance of one output directory.

    Rendered as a scenario file whose header lines are comments, so the
    manifest can be fed back to the parser to reproduce the run.
    """

    command: str
    config: ScenarioConfig
    version: str
    wall_clock_seconds: float
    n_events: int
    n_rejections: int
    n_fallbacks: int

    @property
    def seed(self) -> int:
        return self.config.seed

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "seed": self.seed,
            "wall_clock_seconds": self.wall_clock_seconds,
            "events": self.n_events,
            "noise_rejections": self.n_rejections,
            "noise_fallbacks": self.n_fallbacks,
        }

    def render(self, config_text: str) -> str:
        header = [f"# {key} = {value}" for key, value in self.to_dict().items()]
        return "\n".join(header) + "\n\n" + config_text


class CheckStatus(Enum):
    PASS = "pass"
    FAIL = "fail"


@dataclass
class CheckResult:
    name: str
    status: CheckStatus
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status is CheckStatus.PASS

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status.value, "detail": self.detail}


@dataclass
class VerificationReport:
    """Outcome of the exact-identity suite, in execution order."""

    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def first_failure(self) -> Optional[CheckResult]:
        return next((check for check in self.checks if not check.passed), None)

    def render(self) -> str:
        lines = [f"[{check.status.value.upper()}] {check.name}: {check.detail}" for check in self.checks]
        verdict = "all checks passed" if self.passed else f"FAILED: {self.first_failure.name}"
        return "\n".join(lines + [verdict])

from typing import Optional


class ScenarioError(ValueError):
    """A scenario violates a model invariant."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.field = field


class ConfigParseError(ScenarioError):
    """A scenario file could not be parsed; carries the offending line when known."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        super().__init__(message, field=field)
        self.line = line

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"line {self.line}: {self.message}"


class SimulationError(RuntimeError):
    """The collision engine reached an inconsistent state."""


class MeanFieldError(ValueError):
    """The mean-field system cannot be assembled or integrated."""


class MetricsError(ValueError):
    """An observable is undefined for the given input."""

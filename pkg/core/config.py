import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings:
    """Toolkit configuration settings."""

    # Toolkit Metadata
    TOOLKIT_NAME: str = "Stubborn Kinetics - heterogeneous opinion formation toolkit"
    VERSION: str = "1.0.0"

    # Logging Configuration
    LOG_FORMAT: str = "[%(asctime)s] %(name)s: %(message)s"
    LOG_DATE_FORMAT: str = "%H:%M:%S"

    # Collision Engine Configuration
    NOISE_RESAMPLE_LIMIT: int = 100
    EVENT_CHUNK: int = 5_000_000

    # Mean-Field Solver Configuration
    IDENTITY_TOLERANCE: float = 1e-12
    UNSTABLE_MARGIN: float = 1e-6
    MONOTONICITY_TOLERANCE: float = 1e-12
    DEFAULT_MEANFIELD_DT: float = 0.01
    DT_SAFETY: float = 0.25
    LIMIT_PREFACTOR: float = 4.0

    # Scenario Defaults
    DEFAULT_QUANTILE_POINTS: int = 256
    DEFAULT_Q_BINS: int = 16
    DEFAULT_RECORD_EVERY: float = 1.0

    # Experiment Configuration
    CONVERGENCE_THRESHOLD: float = 0.05
    DEFAULT_SEEDS: int = 1
    DENSITY_W_BINS: int = 50
    DENSITY_Q_BINS: int = 16
    DENSITY_SNAPSHOTS: int = 4
    W1_PROPERTY_CASES: int = 200

    # Output Configuration
    CSV_FLOAT_FORMAT: str = "%.17g"
    MANIFEST_NAME: str = "manifest.txt"

    @property
    def n_jobs(self) -> int:
        """Number of joblib workers for independent runs."""
        raw = os.getenv("STUBBORN_KINETICS_N_JOBS", "1")
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"STUBBORN_KINETICS_N_JOBS must be an integer, got {raw!r}")

    @property
    def debug_checks(self) -> bool:
        """Whether the engine asserts opinion bounds after every chunk."""
        return os.getenv("STUBBORN_KINETICS_DEBUG", "0").lower() in ("1", "true", "yes")

    @property
    def log_level(self) -> str:
        level = os.getenv("STUBBORN_KINETICS_LOG_LEVEL", "INFO").upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"STUBBORN_KINETICS_LOG_LEVEL has unknown level {level!r}")
        return level


settings = Settings()

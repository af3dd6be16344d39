"""
Configuration management for convecta.
Centralizes solver defaults, paths and environment variables.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Settings:
    """Application configuration settings."""

    # Base paths
    BASE_DIR = Path(__file__).parent.parent
    SCENARIO_DIR: Path = Path(os.getenv("SCENARIO_DIR", str(BASE_DIR / "scenarios")))
    OUTPUT_DIR: Path = Path(os.getenv("OUTPUT_DIR", str(BASE_DIR / "runs")))

    # Application Configuration
    APP_ENV: str = os.getenv("APP_ENV", "development")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    THREADS: int = int(os.getenv("CONVECTA_THREADS", "1"))
    SEED: int = int(os.getenv("SEED", "0"))

    # Newton
    NEWTON_TOL: float = float(os.getenv("NEWTON_TOL", "1e-8"))
    NEWTON_MAX_ITER: int = int(os.getenv("NEWTON_MAX_ITER", "20"))
    NEWTON_DIVERGENCE_FACTOR: float = float(os.getenv("NEWTON_DIVERGENCE_FACTOR", "1e3"))

    # Time step policy (fractions are relative to T_diff = H^2/D)
    DT_GROW_FACTOR: float = float(os.getenv("DT_GROW_FACTOR", "1.5"))
    DT_SHRINK_FACTOR: float = float(os.getenv("DT_SHRINK_FACTOR", "0.5"))
    DT_GROW_MAX_NEWTON: int = int(os.getenv("DT_GROW_MAX_NEWTON", "3"))
    DT_SHRINK_MIN_NEWTON: int = int(os.getenv("DT_SHRINK_MIN_NEWTON", "8"))
    DT_MAX_FRACTION: float = float(os.getenv("DT_MAX_FRACTION", "1.0"))
    DT_MIN_FRACTION: float = float(os.getenv("DT_MIN_FRACTION", "1e-6"))
    DT_INITIAL_FRACTION: float = float(os.getenv("DT_INITIAL_FRACTION", "1e-4"))
    STEADY_DT_FRACTION: float = float(os.getenv("STEADY_DT_FRACTION", "0.1"))
    STEADY_RATE: float = float(os.getenv("STEADY_RATE", "1e-12"))  # x omega_max per second
    DW_GROW_LIMIT: float = float(os.getenv("DW_GROW_LIMIT", "0.05"))  # x omega_max
    MAX_STEPS: int = int(os.getenv("MAX_STEPS", "20000"))
    SHERWOOD_CONVECTION_MARGIN: float = float(os.getenv("SHERWOOD_CONVECTION_MARGIN", "0.005"))

    # Eigensolver
    EIG_K: int = int(os.getenv("EIG_K", "5"))
    EIG_TOL: float = float(os.getenv("EIG_TOL", "1e-6"))
    EIG_BASIS_MIN: int = int(os.getenv("EIG_BASIS_MIN", "40"))
    EIG_MAX_MATVECS: int = int(os.getenv("EIG_MAX_MATVECS", "50000"))
    EIG_EARLY_EXIT_TOL: float = float(os.getenv("EIG_EARLY_EXIT_TOL", "1e-3"))
    GRID_CHECK_RATIO: float = float(os.getenv("GRID_CHECK_RATIO", "1.77"))

    # Numerics
    PERTURBATION_AMPLITUDE: float = float(os.getenv("PERTURBATION_AMPLITUDE", "1e-3"))
    PECLET_WARN: float = float(os.getenv("PECLET_WARN", "2.0"))
    EQUILIBRIUM_TOL: float = float(os.getenv("EQUILIBRIUM_TOL", "1e-10"))
    PIVOT_THRESHOLD: float = float(os.getenv("PIVOT_THRESHOLD", "1e-14"))
    SNAP_TOL: float = float(os.getenv("SNAP_TOL", "1e-9"))

    # Memoized equilibria and catalog scans
    CACHE_TTL: int = int(os.getenv("CACHE_TTL", "3600"))  # seconds
    CACHE_MAX_ENTRIES: int = int(os.getenv("CACHE_MAX_ENTRIES", "64"))

    @classmethod
    def validate(cls) -> bool:
        """Validate required configuration settings."""
        from utils.exceptions import ConfigError

        positive = {
            "NEWTON_TOL": cls.NEWTON_TOL,
            "EIG_TOL": cls.EIG_TOL,
            "DT_MAX_FRACTION": cls.DT_MAX_FRACTION,
            "DT_MIN_FRACTION": cls.DT_MIN_FRACTION,
            "PIVOT_THRESHOLD": cls.PIVOT_THRESHOLD,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if cls.THREADS < 1:
            raise ConfigError(f"CONVECTA_THREADS must be >= 1, got {cls.THREADS}")
        if not cls.OUTPUT_DIR.exists():
            cls.OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
        return True

    @classmethod
    def is_production(cls) -> bool:
        """Check if running in production environment."""
        return cls.APP_ENV == "production"


# Create settings instance
settings = Settings()

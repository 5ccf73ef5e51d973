"""Application configuration loaded from environment variables."""

import os
from dotenv import load_dotenv

load_dotenv()

class Settings:
    """Centralized numerical and runtime settings.

    Services read these at call time, so a CLI flag (or a test) can override
    a value on the shared ``settings`` instance for a single run.
    """

    # Lift / enumeration limits
    DIM_CAP: int = int(os.getenv("PRADIUS_DIM_CAP", "4096"))
    PRODUCT_BUDGET: int = int(os.getenv("PRADIUS_PRODUCT_BUDGET", "1000000"))

    # Tolerances
    EIG_TOL: float = float(os.getenv("PRADIUS_EIG_TOL", "1e-10"))
    NORM_TOL: float = float(os.getenv("PRADIUS_NORM_TOL", "1e-9"))
    STABILITY_TOL: float = float(os.getenv("PRADIUS_STABILITY_TOL", "1e-9"))
    STOCHASTIC_TOL: float = 1e-12    # row sums of Q
    DISTRIBUTION_TOL: float = 1e-9   # initial distributions

    # Default efforts
    JSR_DEPTH: int = int(os.getenv("PRADIUS_JSR_DEPTH", "8"))
    GRID_RESOLUTION: int = int(os.getenv("PRADIUS_GRID_RESOLUTION", "41"))
    K_MAX: int = int(os.getenv("PRADIUS_K_MAX", "8"))
    SCALAR_GRID_MAX_N: int = 4       # exhaustive scalar grid only up to this N

    # Runtime
    WORKERS: int = int(os.getenv("PRADIUS_WORKERS", "1"))
    LOG_LEVEL: str = os.getenv("PRADIUS_LOG_LEVEL", "INFO")


settings = Settings()

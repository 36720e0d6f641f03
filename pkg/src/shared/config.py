from functools import lru_cache
from typing import List, Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Centralised configuration pulled from environment variables.

    These settings are reused by the library solvers, the `acopf` CLI
    and the FastAPI gateway so that every front end shares one set of defaults.
    """

    model_config = SettingsConfigDict(env_prefix="ACOPF_", env_file=".env", extra="ignore")

    environment: str = "dev"
    api_prefix: str = "/api/v1"

    # Log level for the loguru stderr sink (ACOPF_LOG)
    log: Literal["error", "info", "debug"] = "info"

    # Solver defaults, overridable per call
    tol_feas: float = 1e-6
    tol_opt: float = 1e-6
    barrier_reduction: float = 0.1
    multistart_count: int = 10
    max_iter: int = 200
    rng_seed: int = 0

    # Evaluation
    psd_tolerance: float = 1e-8
    phase_cutoff: float = 1e-9

    # Case files: magnitudes at or above this value mean "unbounded"
    inf_sentinel: float = 1e30

    # Security / CORS
    cors_allow_origins: List[str] = ["*"]

    # Upload guard for the gateway
    max_upload_bytes: int = 5 * 1024 * 1024


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()

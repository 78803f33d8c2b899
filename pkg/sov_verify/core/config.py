from functools import lru_cache
from typing import Literal, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Runtime
    threads: int = Field(default=4, ge=1)
    seed: int = 20240517

    # Numerics
    int_tol: float = Field(default=1e-9, gt=0)
    quad_abs_tol: float = Field(default=1e-8, gt=0)
    quad_rel_tol: float = Field(default=1e-6, gt=0)
    quad_rel_tol_multi: float = Field(default=1e-4, gt=0)  # k = 2, 3
    quad_max_evals: int = Field(default=4_000_000, gt=0)
    quad_max_level: int = Field(default=6, ge=1)
    outer_cutoff: float = Field(default=40.0, gt=0)
    local_power_limit: float = 1.9
    cut_margin: float = Field(default=1e-6, gt=0)
    pole_margin: float = Field(default=1e-6, gt=0)

    # Mellin-Barnes sums
    mb_n_max: int = Field(default=8, ge=1)
    mb_nu_cutoff: float = Field(default=40.0, gt=0)
    mb_tol: float = Field(default=1e-6, gt=0)

    # Regulator
    epsilon_default: float = Field(default=0.05, ge=0)
    epsilon_sequence: list[float] = [0.2, 0.1, 0.05, 0.025]

    # Reporting
    report_dir: str = "reports"
    default_format: Literal["json", "text"] = "json"

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    model_config = SettingsConfigDict(env_file=".env", env_prefix="SOV_VERIFY_", case_sensitive=False, extra="ignore")


@lru_cache()
def get_settings() -> Settings:
    return Settings()

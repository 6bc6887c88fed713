"""
Configuration management for the qflow laboratory
"""
import math
from typing import Literal, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings"""

    model_config = SettingsConfigDict(
        env_prefix="QFLOW_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Logging
    log_level: str = Field(default="INFO")

    # Parallelism (QFLOW_THREADS)
    threads: Optional[int] = Field(default=None, ge=1)

    # Discretization
    default_band_limit: int = Field(default=16, ge=4)
    test_band_limit: int = Field(default=24, ge=4)
    oversample: int = Field(default=2, ge=1)
    laplacian_convention: Literal["beltrami", "nonnegative"] = Field(default="beltrami")

    # Nonlinear term monitoring
    tail_tol: float = Field(default=1e-6, gt=0)
    tail_abort: float = Field(default=1e-2, gt=0)
    exp_overflow_limit: float = Field(default=700.0, gt=0)

    # Gauge normalization
    gauge_tol: float = Field(default=1e-10, gt=0)
    gauge_max_iters: int = Field(default=60, ge=1)
    gauge_fd_step: float = Field(default=1e-5, gt=0)
    gauge_oversample: int = Field(default=1, ge=1)

    # Critical point search
    morse_seed_band_limit: int = Field(default=6, ge=4)
    morse_fd_step: float = Field(default=1e-4, gt=0)
    morse_max_newton: int = Field(default=50, ge=1)
    morse_max_step: float = Field(default=0.5, gt=0)
    morse_grad_tol: float = Field(default=1e-10, gt=0)
    morse_dedupe_tol: float = Field(default=1e-6, gt=0)
    morse_nondegeneracy_tol: float = Field(default=1e-6, gt=0)
    morse_laplacian_tol: float = Field(default=1e-6, gt=0)
    morse_boundary_tol: float = Field(default=1e-9, gt=0)

    # Concentration monitor
    conc_threshold: float = Field(default=2.0 * math.pi ** 2, gt=0)
    conc_radius_tol: float = Field(default=0.05, gt=0)
    conc_mass_frac: float = Field(default=0.9, gt=0, le=1)
    conc_window: int = Field(default=3, ge=3)
    scan_band_limit: int = Field(default=6, ge=4)
    scan_candidate_band_limit: int = Field(default=4, ge=4)
    scan_radius_tol: float = Field(default=1e-3, gt=0)
    cap_nodes: int = Field(default=16, ge=4)
    s3_order: int = Field(default=4, ge=2)
    bubble_chebyshev_degree: int = Field(default=48, ge=8)
    bubble_s3_order: int = Field(default=4, ge=2)

    # Selftest tamper hook: swaps two analysis slots of different degree
    debug_corrupt_ordering: bool = Field(default=False)


# Global settings instance
settings = Settings()

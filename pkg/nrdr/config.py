from pydantic_settings import BaseSettings
from functools import lru_cache
from typing import Optional


class Settings(BaseSettings):
    # App Settings
    log_level: str = "INFO"
    n_jobs: Optional[int] = None  # None = all cores

    # Neighbourhood graph / kernels
    knn_k: int = 10
    lle_reg: float = 1e-3  # relative to trace of the local Gram

    # Kernel smoother (Nadaraya-Watson)
    alpha: float = 0.3
    sv_threshold: float = 0.03
    smoother_neighbor_cap: int = 10000

    # Eigensolver
    eig_tol: float = 1e-9
    eig_max_iter: int = 10000
    eig_ncv: int = 40
    dense_cutoff: int = 8  # operators this small are decomposed densely
    exhaustion_ratio: float = 1e-10

    # Doubly stochastic balancing for the LEM kernel
    sinkhorn_tol: float = 1e-13
    sinkhorn_max_iter: int = 2000

    # Diagnostics
    score_threshold: float = 0.5
    oracle_margin: float = 0.2
    report_version: str = "1.0"

    @property
    def sklearn_n_jobs(self) -> int:
        return -1 if self.n_jobs is None else self.n_jobs

    class Config:
        env_prefix = "NRDR_"
        env_file = ".env"
        env_file_encoding = "utf-8"


@lru_cache
def get_settings() -> Settings:
    return Settings()

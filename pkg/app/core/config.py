from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import List, Optional
from pathlib import Path


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="MPC_PORTFOLIO_",
        env_file=".env",
        extra="ignore",  # Allow extra fields in .env file
    )

    # Artifacts
    output_root: Path = Path("./runs")
    log_level: str = "INFO"
    jobs: int = 1

    # Model scoring
    k_folds: int = 3
    eval_timeout_s: float = 60.0  # desk-scale stand-in for a 10 minute cap

    # Tuning
    tuning_budget: int = 40
    random_init_size: int = 5
    portfolio_size: int = 10
    portfolio_sizes: List[int] = [5, 10, 15, 20]

    # Surrogate / acquisition
    surrogate_trees: int = 30
    surrogate_min_leaf: int = 3
    surrogate_max_features: float = 5.0 / 6.0
    variance_floor: float = 1e-6
    candidate_pool_size: int = 1000
    incumbent_perturbations: int = 10
    perturbation_scale: float = 0.1
    exploration_probability: float = 0.1

    # Dataset generation
    default_n_traj: int = 100
    default_length: int = 200
    default_dt: float = 0.05
    integration_substeps: int = 20
    split: List[float] = [0.7, 0.15, 0.15]

    # Optional comma-separated override of portfolio_sizes, e.g. "5,10"
    portfolio_sizes_override: Optional[str] = None


def _merge_overrides(base: Settings) -> Settings:
    """Apply comma-separated overrides that are awkward to express as JSON env vars."""
    if base.portfolio_sizes_override:
        sizes = [int(s.strip()) for s in base.portfolio_sizes_override.split(",") if s.strip()]
        # Remove duplicates while preserving order
        base.portfolio_sizes = list(dict.fromkeys(sizes))
    return base


settings = _merge_overrides(Settings())

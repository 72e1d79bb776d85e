from collections.abc import Mapping
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from dotenv import dotenv_values
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from pydantic_settings import BaseSettings, SettingsConfigDict

from entroscale.core.errors import ConfigError


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="ENTROSCALE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Worker pool size; None means one worker per CPU
    threads: int | None = Field(None, ge=1)

    log_level: str = "INFO"


@lru_cache
def get_settings() -> Settings:
    """Cached settings instance."""
    return Settings()


class ExperimentConfig(BaseModel):
    """One experiment's parameters, from a key=value file plus overrides."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = Field(42, ge=0, lt=2**64)

    # Entropy theory
    scan_sizes: list[int] = [64, 128, 256, 512, 1024, 2048, 4096]
    theory_sizes: list[int] = [1024, 2048, 4096]
    trials: int = Field(200, ge=2)
    decomposition_cases: int = Field(1000, ge=1)
    quadrature_grid: int = Field(10, ge=2)
    concentration_cases: int = Field(50, ge=1)
    d_token: int = Field(64, ge=1)
    d_proj: int = Field(64, ge=1)
    d_key: int = Field(64, ge=1)
    query_rows: int = Field(4, ge=1)
    score_variance: float = Field(1.0, ge=0)
    train_tokens: int = Field(512, ge=2)

    # Toy diffusion
    image_size: int = Field(8, ge=1)
    patch_size: int = Field(2, ge=1)
    d_model: int = Field(32, ge=1)
    n_heads: int = Field(1, ge=1)
    n_layers: int = Field(2, ge=1)
    mlp_hidden: int = Field(64, ge=1)
    diffusion_steps: int = Field(200, ge=2)
    beta_start: float = Field(1e-4, gt=0, lt=1)
    beta_end: float = Field(0.02, gt=0, lt=1)
    train_steps: int = Field(500, ge=0)
    batch_size: int = Field(16, ge=1)
    learning_rate: float = Field(0.01, ge=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    sample_height: int = Field(8, ge=1)
    sample_width: int = Field(8, ge=1)
    sample_policy: Literal["fixed", "entropy_preserving"] = "fixed"
    sweep_sizes: list[int] = [4, 8, 16]

    # Output
    output_dir: Path = Path("out")
    checkpoint: Path | None = None

    @field_validator("scan_sizes", "theory_sizes", "sweep_sizes", mode="before")
    @classmethod
    def split_csv(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [int(part) for part in value.split(",") if part.strip()]
        return value

    @field_validator("scan_sizes", "theory_sizes")
    @classmethod
    def check_token_sizes(cls, value: list[int]) -> list[int]:
        if len(value) < 2:
            raise ValueError("at least two sizes are needed for a regression")
        if any(n < 4 for n in value):
            raise ValueError("every size must be at least 4")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("sizes must be strictly ascending")
        return value

    @model_validator(mode="after")
    def check_diffusion(self) -> "ExperimentConfig":
        if self.beta_start > self.beta_end:
            raise ValueError("beta_start must not exceed beta_end")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_model % 4:
            # half the width encodes rows, half columns, each as sin/cos pairs
            raise ValueError("d_model must be a multiple of 4")
        for name in ("image_size", "sample_height", "sample_width"):
            if getattr(self, name) % self.patch_size:
                raise ValueError(f"{name} must be divisible by patch_size")
        if self.image_size == self.patch_size:
            raise ValueError("image_size must span at least two patches per side")
        for size in self.sweep_sizes:
            if size < 1 or size % self.patch_size:
                raise ValueError("sweep_sizes must be divisible by patch_size")
        return self

    @property
    def checkpoint_path(self) -> Path:
        return self.checkpoint or self.output_dir / "denoiser.ckpt"


def load_experiment_config(
    path: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> ExperimentConfig:
    """Read a key=value config file, apply overrides, validate."""
    values: dict[str, Any] = {}
    if path is not None:
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(
            {key.lower(): value for key, value in dotenv_values(path).items()}
        )
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc

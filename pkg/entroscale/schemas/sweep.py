from pydantic import BaseModel, ConfigDict, Field


class SweepRow(BaseModel):
    """Trained-denoiser entropy at one sampling resolution under one policy."""

    model_config = ConfigDict(frozen=True)

    policy: str
    height: int = Field(..., ge=1)
    width: int = Field(..., ge=1)
    n_tokens: int = Field(..., ge=1)
    ln_n: float
    lambda_ratio: float = Field(..., ge=0)
    mean_entropy: float
    mean_gap: float = Field(..., ge=0)

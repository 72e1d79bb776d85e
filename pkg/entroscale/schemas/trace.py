from pydantic import BaseModel, ConfigDict, Field


class EntropyRecord(BaseModel):
    """Mean attention entropy of one attention layer at one sampling step."""

    model_config = ConfigDict(frozen=True)

    timestep: int = Field(..., ge=0)
    layer_id: int = Field(..., ge=0)
    n_tokens: int = Field(..., ge=1)
    policy: str
    mean_entropy: float = Field(..., ge=0)
    fell_back: bool = False

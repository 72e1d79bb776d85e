from pydantic import BaseModel, ConfigDict, Field


class LossRow(BaseModel):
    """Training loss after one optimizer step."""

    model_config = ConfigDict(frozen=True)

    step: int = Field(..., ge=0)
    loss: float = Field(..., ge=0)

from pydantic import BaseModel, ConfigDict, Field


class CheckRow(BaseModel):
    """One theory check: a predicted value against its measurement."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    check_name: str
    n: int
    predicted: float
    measured: float
    stderr: float = 0.0
    passed: bool = Field(..., alias="pass")

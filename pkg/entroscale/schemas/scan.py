from pydantic import BaseModel, ConfigDict, Field


class ScanRow(BaseModel):
    """Monte Carlo mean entropy at one token count."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    n: int = Field(..., ge=1)
    ln_n: float
    lam: float = Field(..., ge=0, alias="lambda")
    mean_entropy: float
    stderr: float = Field(..., ge=0)


class ScanResult(BaseModel):
    """An entropy-vs-ln N scan under one policy, with its linear fit."""

    model_config = ConfigDict(frozen=True)

    policy: str
    rows: list[ScanRow]
    slope: float
    intercept: float
    r_squared: float = Field(..., ge=0, le=1)

    def fit_summary(self) -> str:
        return (
            f"# fit policy={self.policy} slope={self.slope:.17g} "
            f"intercept={self.intercept:.17g} r2={self.r_squared:.17g}"
        )

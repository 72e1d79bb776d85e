from entroscale.schemas.scan import ScanResult, ScanRow
from entroscale.schemas.sweep import SweepRow
from entroscale.schemas.theory import CheckRow
from entroscale.schemas.trace import EntropyRecord
from entroscale.schemas.training import LossRow

__all__ = [
    "ScanRow",
    "ScanResult",
    "SweepRow",
    "CheckRow",
    "EntropyRecord",
    "LossRow",
]

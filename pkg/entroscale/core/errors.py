"""Exception hierarchy.

Every error carries the process exit code the CLI reports for it, the same
way an HTTP error carries its status code.
"""

from typing import Any


class ExitCode:
    """Process exit codes. No command returns anything else."""

    OK = 0
    CHECK_FAILED = 1
    CONFIG_ERROR = 2
    IO_ERROR = 3
    CHECKPOINT_ERROR = 4


class EntroscaleError(Exception):
    """Base class for all errors raised by this package."""

    exit_code: int = ExitCode.CHECK_FAILED

    def __init__(self, detail: str) -> None:
        super().__init__(detail)
        self.detail = detail


class ConfigError(EntroscaleError):
    """Invalid experiment configuration."""

    exit_code = ExitCode.CONFIG_ERROR


class CheckFailure(EntroscaleError):
    """A verification check did not pass."""

    exit_code = ExitCode.CHECK_FAILED


class OutputError(EntroscaleError):
    """An output file or directory could not be written."""

    exit_code = ExitCode.IO_ERROR

    def __init__(self, path: object, reason: str) -> None:
        super().__init__(f"cannot write {path}: {reason}")
        self.path = path


class CheckpointError(EntroscaleError):
    """Unreadable or corrupted checkpoint file."""

    exit_code = ExitCode.CHECKPOINT_ERROR


class CheckpointVersionError(CheckpointError):
    """Checkpoint written with an unsupported layout version."""


# Numerical precondition failures


class NumericError(EntroscaleError, ValueError):
    """Base class for numerical precondition violations."""


class NotSquare(NumericError):
    pass


class NotSymmetric(NumericError):
    pass


class IndefiniteAfterJitter(NumericError):
    """Matrix is not positive semidefinite even after the largest jitter."""


class DegenerateX(NumericError):
    """Regression abscissae are all equal (or fewer than two points)."""


class LengthMismatch(NumericError):
    pass


class NonFiniteEvaluation(NumericError):
    pass


class ShapeMismatch(NumericError):
    pass


class NonFiniteInput(NumericError):
    pass


class InvalidScale(NumericError):
    pass


class InvalidTrainTokens(NumericError):
    pass


class MomentOverflow(NumericError):
    """Closed-form moment would overflow (exponent above the safe limit)."""


class InvalidTrials(NumericError):
    pass


class InvalidSizes(NumericError):
    pass


class InvalidRange(NumericError):
    pass


class StepOutOfRange(NumericError):
    pass


class EmptyBatch(NumericError):
    pass


class IncompatibleResolution(NumericError):
    pass


class NonFiniteLoss(NumericError):
    """Training produced a non-finite loss.

    `state` holds the last TrainState whose loss was finite.
    """

    def __init__(self, detail: str, state: Any = None) -> None:
        super().__init__(detail)
        self.state = state

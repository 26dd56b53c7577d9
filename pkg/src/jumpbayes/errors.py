"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or out-of-range input."""


class UsageError(RuntimeError):
    """An operation was called in a context it does not apply to."""


class NumericBlowupError(FloatingPointError):
    """A simulated state became non-finite."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state encountered at step {step}")


class SupportViolationError(ArithmeticError):
    """Two Levy measures are not mutually absolutely continuous on the core region."""


class SingularWeightError(ArithmeticError):
    """A Girsanov weight is exactly zero (log-weight is -inf)."""

    def __init__(self, message, jump_size=None):
        self.jump_size = jump_size
        self.log_weight = float("-inf")
        super().__init__(message)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``cause`` is the original error."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")

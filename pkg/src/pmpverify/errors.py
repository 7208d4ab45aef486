"""Exception types shared across the package."""


class PmpError(Exception):
    """Base class for all package-specific errors."""


class MalformedControlError(PmpError):
    """A segment evaluator has no usable one-sided limit at a breakpoint."""


class DomainError(PmpError, ValueError):
    """An argument lies outside its admissible domain (time or state)."""


class DomainExitError(PmpError):
    """Integrated trajectory left the admissible state region."""

    def __init__(self, t_exit, message=None):
        self.t_exit = float(t_exit)
        super().__init__(message or f"trajectory left the state region at t = {t_exit:.6g}")


class NeedleBudgetError(PmpError):
    """Needle intervals overlap or leave [0, T]."""

    def __init__(self, index, message):
        self.index = index
        super().__init__(message)


class ShrinkRadiusError(PmpError):
    """Requested tube radius makes the tube leave the state region."""

    def __init__(self, largest_admissible, message=None):
        self.largest_admissible = float(largest_admissible)
        super().__init__(
            message
            or f"tube exits state region; largest admissible radius ~ {largest_admissible:.6g}"
        )


class ContractionViolationError(PmpError):
    """Measured fixed-point ratio exceeds the theoretical bound plus slack."""


class InvarianceViolationError(PmpError):
    """A fixed-point iterate left the invariant Bielecki ball."""


class IllConditionedResolventError(PmpError):
    """A transition matrix is too ill conditioned to invert safely."""


class TransformInconsistencyError(PmpError):
    """The augmented costate's extra component failed to stay constant."""


class AlreadyMayerError(PmpError):
    """Augmentation requested on a problem without a running cost."""


class ContractError(PmpError, ValueError):
    """Caller violated an interface contract (dimensions, missing data)."""

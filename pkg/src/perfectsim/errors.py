"""Exception hierarchy shared by every module."""

__all__ = [
    "PerfectSimError",
    "ModelError",
    "UnassignedSpin",
    "VertexNotInSet",
    "InfiniteSupport",
    "NumericalInconsistency",
    "SequenceViolation",
    "Property1Violation",
    "Property2Violation",
    "Property3Violation",
    "CenterMismatch",
    "TailNotBoundable",
    "NotPairwise",
    "TooManyHyperedges",
    "BlockTooLarge",
    "UnsupportedModelClass",
    "EmptyWindow",
    "StepLimitExceeded",
    "InternalInvariantViolation",
    "RegionTooLarge",
    "InfiniteExceptionalRegion",
]


class PerfectSimError(Exception):
    """Base class for all library errors."""


class ModelError(PerfectSimError, ValueError):
    """Invalid interaction or model description."""


class UnassignedSpin(PerfectSimError):
    pass


class VertexNotInSet(PerfectSimError, ValueError):
    pass


class InfiniteSupport(PerfectSimError):
    """Raised by operations that need a finite number of hyperedges at a vertex."""


class NumericalInconsistency(PerfectSimError, ArithmeticError):
    pass


class SequenceViolation(PerfectSimError):
    pass


class Property1Violation(SequenceViolation):
    pass


class Property2Violation(SequenceViolation):
    pass


class Property3Violation(SequenceViolation):
    pass


class CenterMismatch(PerfectSimError, ValueError):
    pass


class TailNotBoundable(PerfectSimError):
    pass


class NotPairwise(PerfectSimError, ValueError):
    pass


class TooManyHyperedges(PerfectSimError):
    pass


class BlockTooLarge(PerfectSimError):
    pass


class UnsupportedModelClass(PerfectSimError):
    pass


class EmptyWindow(PerfectSimError, ValueError):
    pass


class StepLimitExceeded(PerfectSimError):
    """The backward chain did not die out within ``max_steps`` events."""

    def __init__(self, max_steps, set_size=None):
        self.max_steps = max_steps
        self.set_size = set_size
        msg = f"backward sketch still alive after {max_steps} events"
        if set_size is not None:
            msg += f" (|C| = {set_size})"
        super().__init__(msg)


class InternalInvariantViolation(PerfectSimError, RuntimeError):
    pass


class RegionTooLarge(PerfectSimError):
    pass


class InfiniteExceptionalRegion(PerfectSimError):
    pass

"""Exception hierarchy.

Every error raised on purpose by the package derives from ``StableGapError`` so
callers (and the CLI) can separate domain failures from programming errors.
"""

from __future__ import annotations


class StableGapError(Exception):
    """Base class for all package errors."""


class ParameterError(StableGapError, ValueError):
    """An argument lies outside its admissible domain."""


class ContractError(StableGapError):
    """A documented precondition of an operation does not hold."""


class AccuracyError(StableGapError):
    """A requested quantity cannot be delivered to the requested accuracy."""

    def __init__(self, message: str, residual_bound: float):
        super().__init__(f"{message} (residual bound {residual_bound:.3e})")
        self.residual_bound = residual_bound


class StructuralError(StableGapError):
    """The chain is reducible, so the gap of the variational formula is not defined."""


class ConvergenceError(StableGapError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class DegenerateError(StableGapError):
    """The object has too few states (or too little variation) for a gap to exist."""


class CapacityError(StableGapError):
    def __init__(self, message: str, count: int):
        super().__init__(f"{message}: {count} states")
        self.count = count


class InfeasibleCertificateError(StableGapError):
    def __init__(self, message: str, condition: str):
        super().__init__(f"{message} [{condition}]")
        self.condition = condition


class ComparisonViolatedError(StableGapError):
    pass


class ClassificationError(StableGapError):
    pass


class TruncationError(StableGapError):
    def __init__(self, message: str, leaked_mass: float):
        super().__init__(f"{message} (leaked mass {leaked_mass:.3e})")
        self.leaked_mass = leaked_mass


class SamplingDomainError(StableGapError):
    pass


class AlignmentError(StableGapError):
    pass


class StepSizeError(StableGapError):
    pass


class ConstructionError(StableGapError):
    """A generator failed a consistency check while being assembled."""

"""Exception hierarchy shared by every module of the package."""


class MoltcError(Exception):
    """Base class for all errors raised by moltc."""


class ConfigurationError(MoltcError, ValueError):
    """Invalid parameters, grids, layouts or step sizes."""


class IngestionError(MoltcError, ValueError):
    """A curve file could not be parsed or failed validation."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ExtrapolationError(ConfigurationError):
    """The simulation grid extends beyond the sampled curve window."""


class FittingError(MoltcError):
    """Surrogate parameters cannot satisfy their constraints."""


class NumericalError(MoltcError, ArithmeticError):
    """A numerical routine failed (degeneracy, NaN, non-convergence)."""


class PropagationError(NumericalError):
    """Time propagation produced a non-finite state."""

    def __init__(self, message, seed=None, step=None):
        extra = []
        if seed is not None:
            extra.append(f"seed={seed}")
        if step is not None:
            extra.append(f"step={step}")
        if extra:
            message = f"{message} ({', '.join(extra)})"
        super().__init__(message)
        self.seed = seed
        self.step = step


class ConsistencyError(MoltcError):
    """A physics invariant (trace, norm, retention bounds...) was violated."""


class InvalidJumpError(MoltcError):
    """A quantum jump was requested on a state where it cannot act."""

"""Exception hierarchy shared by all modules."""


class RydbergJumpsError(Exception):
    """Base class for package errors."""


class ConfigError(RydbergJumpsError, ValueError):
    """Invalid parameters, lattice, or run configuration."""


class ResourceLimitError(RydbergJumpsError):
    """Requested system exceeds a memory or dimension guardrail."""


class NumericalError(RydbergJumpsError, ArithmeticError):
    """Propagation, eigensolve, or integration failure."""


class DegenerateSteadyStateError(NumericalError):
    """The Liouvillian null space has dimension larger than one."""

    def __init__(self, null_dim: int, message: str | None = None):
        self.null_dim = null_dim
        super().__init__(message or f"steady state is not unique (null space dimension {null_dim})")


class InsufficientDataError(RydbergJumpsError, ValueError):
    """Too few intervals or events for the requested statistic."""


class EnsembleError(RydbergJumpsError):
    """Some trajectories of an ensemble failed; completed records are kept in ``partial``."""

    def __init__(self, failures: dict[int, str], partial: dict):
        self.failures = failures
        self.partial = partial
        super().__init__(
            f"{len(failures)} trajectories failed: "
            + "; ".join(f"#{k}: {v}" for k, v in sorted(failures.items()))
        )

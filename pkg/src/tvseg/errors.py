"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An operation received malformed, inconsistent, or non-finite input."""


class NumericalFailureError(RuntimeError):
    """An iterative numerical kernel failed to converge."""


class SingularSystemError(RuntimeError):
    """A linear system is singular or too close to singular to solve."""


class OracleUnavailableError(RuntimeError):
    """The adjacency oracle could not be reached after the configured retries."""

    def __init__(self, message, pair_index=None):
        super().__init__(message)
        self.pair_index = pair_index


class ProtocolError(RuntimeError):
    """A remote endpoint returned a response the client cannot interpret."""


class DivergenceError(RuntimeError):
    """The solver produced a non-finite objective; carries the trace so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class SelectionError(RuntimeError):
    """Cluster-count selection failed: every candidate was degenerate."""


class UndefinedMetricError(RuntimeError):
    """A metric is undefined for the given label configuration."""

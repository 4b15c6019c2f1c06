"""Exception types shared across the package."""


class BayesPilotError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(BayesPilotError):
    """Inputs have inconsistent shapes or lengths."""


class DegenerateCovarianceError(BayesPilotError):
    """A covariance matrix is singular or otherwise unusable."""


class TransformDomainError(BayesPilotError):
    """Input lies outside the domain of the correlation transform."""


class FixedPointDivergenceError(BayesPilotError):
    """Fixed-point iteration hit its cap before converging."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InsufficientDataError(BayesPilotError):
    """Not enough pilot rows for the requested operation."""


class InferenceDegeneracyError(BayesPilotError):
    """Pilot statistics are rank deficient; more pilot samples needed."""


class TruncationError(BayesPilotError):
    """Quantile truncation removed every simulated sample row."""


class UndefinedMomentError(BayesPilotError):
    """Requested distribution moment does not exist for these parameters."""


class SingularCouplingError(BayesPilotError):
    """The coupling system for the control-variate weights is singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class BudgetInfeasibleError(BayesPilotError):
    """Budget cannot fund a minimal estimator."""

    def __init__(self, message, min_budget=None):
        super().__init__(message)
        self.min_budget = min_budget


class AdaptiveRunError(BayesPilotError):
    """An adaptive run failed; carries the iteration trace gathered so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class TableExhaustedError(BayesPilotError):
    """A tabular ensemble ran out of precomputed rows."""

    def __init__(self, message, rows_remaining=None):
        super().__init__(message)
        self.rows_remaining = rows_remaining


class SchemaError(BayesPilotError):
    """A tabular file does not match its declared schema."""

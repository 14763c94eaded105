"""Exception types shared across the package."""


class QuasifreeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(QuasifreeError):
    """Malformed, inconsistent, or missing configuration input."""


class SymbolRangeError(QuasifreeError):
    """A symbol evaluated outside the admissible range [0, 1]."""


class EvaluationError(QuasifreeError):
    """A user-supplied callback produced non-finite or malformed values."""


class QuadratureNonConvergence(QuasifreeError):
    """Adaptive quadrature exhausted its refinement budget.

    Carries the best available value and the residual error estimate.
    """

    def __init__(self, message, value=None, error_estimate=None):
        super().__init__(message)
        self.value = value
        self.error_estimate = error_estimate


class ExchangeError(QuasifreeError):
    """The equioscillation exchange iteration failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class OracleMismatch(QuasifreeError):
    """The brute-force density matrix disagrees with the mode-product form."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class BoundViolation(QuasifreeError):
    """A certified error bound was exceeded beyond quadrature slack."""

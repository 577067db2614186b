"""Exception hierarchy shared by all modules."""


class PbefError(Exception):
    """Base class for every error raised by the package."""


class DomainError(PbefError, ValueError):
    """A point lies outside the state space or a parameter outside its bounds."""


class ModelError(PbefError, ValueError):
    """Invalid model construction or parameter values."""


class NumericalError(PbefError, RuntimeError):
    """Quadrature, inversion or other numerical routine failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DegeneratePredictorError(PbefError, ValueError):
    """The predictor function has zero variance under the invariant law."""


class IdentifiabilityError(PbefError, ValueError):
    """The parameter is not identified by the estimating function."""


class SimulationError(PbefError, RuntimeError):
    """A simulated path left the state space."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SingularJacobianError(PbefError, RuntimeError):
    """Jacobian of the estimating function is numerically singular."""


class NonConvergenceError(PbefError, RuntimeError):
    """Root finder hit its iteration limit."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigurationError(PbefError, ValueError):
    """Malformed configuration or incompatible shapes."""


class BoundaryTermError(PbefError, RuntimeError):
    """Integration-by-parts boundary terms do not vanish numerically."""


class NotAvailableError(PbefError, LookupError):
    """No closed form exists for the requested quantity; use Monte Carlo instead."""

"""Exception hierarchy. The CLI maps each family to its own exit status."""


class SirError(Exception):
    """Base class for all package errors."""


class InputError(SirError, ValueError):
    """Malformed or inconsistent input data."""


class DimensionError(InputError):
    """Array dimensions do not line up."""


class SingularDesignError(SirError):
    """The design matrix is rank deficient."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class ConvergenceError(SirError):
    """An iterative fit failed to converge or diverged."""


class BoundaryMLEError(ConvergenceError):
    """The likelihood is maximized on the boundary (a fitted mean tends to 0)."""


class IdentifiabilityError(SirError):
    """The first sender coefficient is too close to zero to normalize by."""


class NotInvertibleError(SirError):
    """Information matrix is singular or not negative definite."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class SimulationUnstableError(SirError):
    """Simulated dynamics exceeded the linear-predictor guard."""

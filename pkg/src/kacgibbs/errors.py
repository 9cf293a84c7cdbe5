"""Exception types shared across the package."""


class GridMismatchError(ValueError):
    """Two torus objects live on different grids."""


class ConvergenceError(RuntimeError):
    """An iterative solver or quadrature did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class UnsupportedRegimeError(ValueError):
    """The requested computation is only defined for beta_prime == 0."""


class BifurcationError(RuntimeError):
    """A quantity that needs a unique minimizer was asked for at a bifurcation.

    ``branches`` carries the per-minimizer values so callers can still inspect them.
    """

    def __init__(self, message, branches=()):
        super().__init__(message)
        self.branches = tuple(branches)


class SelectionAnomaly(RuntimeError):
    """One-sided perturbation limits coincide although the minimizers differ."""


class InconclusiveError(RuntimeError):
    """A classification could not be decided (solver failed and no certificate)."""


class AcceptanceStarvation(RuntimeError):
    """Too few Monte Carlo replicas landed in the conditioning ball."""


class EnumerationTooLarge(ValueError):
    """Exact enumeration requested beyond the supported lattice size."""

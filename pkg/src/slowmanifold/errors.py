"""Exception hierarchy shared by all slowmanifold modules."""


class SlowManifoldError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SlowManifoldError):
    """Invalid input: non-finite state, wrong shape, bad parameter."""


class SingularityError(DomainError):
    """State hit (or crossed) a pole of the model's right-hand side."""


class GridError(SlowManifoldError):
    """Grid unusable: too coarse for the stencil, non-uniform, or trimmed away."""


class StiffnessError(SlowManifoldError):
    """Time step underflow: the integrator cannot resolve the dynamics."""


class NonlinearSolverError(SlowManifoldError):
    """Newton-type iteration failed to converge or hit a singular Jacobian."""


class NonGraphError(SlowManifoldError):
    """A point set is not a graph over the requested coordinate.

    Raised when mapped or advected abscissae are not strictly monotone;
    reported to the caller rather than silently repaired.
    """


class BracketError(SlowManifoldError):
    """A scalar search bracket contains no interior minimizer."""


class AdjointShootingError(SlowManifoldError):
    """Costate transversality conditions cannot be met.

    Carries the unachievable terminal/initial costate residual in
    ``residual`` (normalized like a Hamiltonian drift), so callers can
    compare it against the drift of a valid extremal.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual

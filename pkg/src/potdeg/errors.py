"""Exception hierarchy shared across the package."""


class PotdegError(Exception):
    """Base class for all package-specific errors."""


class SingularEvaluation(PotdegError):
    """Kernel evaluated at (or too close to) a singular point."""


class AmbiguousClassification(PotdegError):
    """Solid-angle value fell between the trichotomy bands; mesh too coarse near the point."""


class IllConditioned(PotdegError):
    """Condition estimate of an assembled system exceeded the safety bound."""


class InvalidSpec(PotdegError):
    """Resolution specification has duplicate or missing slots."""


class SingularStructure(PotdegError):
    """det(B1) vanishes identically; the parameter choice is inadmissible."""


class NotInvertible(PotdegError):
    """A matrix that the parameter derivation requires to be invertible is singular."""


class ConditionFailed(PotdegError):
    """An integrability condition on the symbol matrices fails."""

    def __init__(self, message, condition=None, exponent=None):
        super().__init__(message)
        self.condition = condition
        self.exponent = exponent


class RadiusExceeded(PotdegError):
    """A field left the ball ||f||_inf <= M on which the nonlinearity is declared."""


class NoContraction(PotdegError):
    """Contraction certificate failed and best-effort mode was not requested."""


class MaxIterations(PotdegError):
    """Fixed-point iteration stagnated before reaching the tolerance."""


class BoundaryZero(PotdegError):
    """Degree undefined: the field vanishes on the sampled domain boundary."""


class DimensionTooHigh(PotdegError):
    """Brouwer degree requested in a coefficient space of dimension > 4."""


class DegenerateRoot(PotdegError):
    """A root with (numerically) singular Jacobian prevents sign counting."""


class BudgetExceeded(PotdegError):
    """Polynomial fit errors exceed the tau/3 budget; raise N or refuse."""


class SolverInconsistent(PotdegError):
    """Nonzero degree certified but no numerical solution was found."""


class DivergenceDetected(PotdegError):
    """Fixed-point residual kept growing; iteration aborted."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history if history is not None else []


class ConfigInvalid(PotdegError):
    """Experiment configuration violates the command schema."""

"""Exception types raised across the package."""


class CavPlanError(Exception):
    """Base class for all package-specific errors."""


class DomainError(CavPlanError):
    """A steering/velocity combination left the validity region of the vehicle model."""


class NoRoute(CavPlanError):
    """No path exists between the requested road-graph nodes."""


class BadFilterParams(CavPlanError):
    """Invalid Savitzky-Golay window/order for the given waypoint count."""


class DegeneratePair(CavPlanError):
    """A circle center coincides with the counterpart ellipse center."""


class NumericalError(CavPlanError):
    """A factorization failed even after regularization."""


class SingularKKT(CavPlanError):
    """The dense KKT system of an oracle problem is singular."""


class InfeasibleStart(CavPlanError):
    """Initial vehicle states overlap geometrically; the solver cannot start."""


class CollisionDetected(CavPlanError):
    """Exact geometric overlap between two vehicles during execution."""

    def __init__(self, message, run_log=None):
        super().__init__(message)
        self.run_log = run_log


class StepBudgetExceeded(CavPlanError):
    """The episode did not finish within the configured step budget."""

    def __init__(self, message, run_log=None):
        super().__init__(message)
        self.run_log = run_log


class ScenarioInfeasible(CavPlanError):
    """Scenario generation failed after bounded resampling attempts."""

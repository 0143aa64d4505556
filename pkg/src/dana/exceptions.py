"""Exception hierarchy shared by every module of the package."""


class DanaError(Exception):
    """Base class for all errors raised by :mod:`dana`."""


class InvalidInput(DanaError, ValueError):
    """An argument failed validation (shape, sign, finiteness...)."""


class AssumptionViolated(DanaError, ValueError):
    """A standing assumption of an algorithm does not hold (e.g. eps >= 1)."""


class NoFeasiblePoint(DanaError, RuntimeError):
    """A weight-design feasibility problem has no (found) solution."""


class StepSizeTooLarge(DanaError, RuntimeError):
    """The discrete iteration diverged: objective kept increasing."""


class StepTooLarge(DanaError, RuntimeError):
    """The continuous-time integrator step is too coarse (Lyapunov increase)."""


class StateCorruption(DanaError, RuntimeError):
    """A dual variable went negative beyond round-off."""


class LocalityBreach(DanaError, RuntimeError):
    """An agent read a value from outside its allowed neighbourhood."""


class InfeasibleOrDegenerate(DanaError, RuntimeError):
    """The brute-force KKT oracle found no consistent active set."""

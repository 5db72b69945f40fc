"""Exception types shared across the simulator."""


class SimulatorError(Exception):
    """Base class for all errors raised by this package."""


class InvalidSpecError(SimulatorError):
    """A generator or constructor was given parameters outside its domain."""


class NumericDomainError(SimulatorError):
    """An evaluation was attempted at a numerically invalid point."""


class InvalidConfigError(SimulatorError):
    """A run configuration is inconsistent; the message carries the field path."""


class SimulationDeadlockError(SimulatorError):
    """The event queue drained while more iterations were requested."""


class InvalidSelectionError(SimulatorError):
    """A scheduling policy selected a worker that is not available."""


class IdentityViolationError(SimulatorError):
    """An exact bookkeeping identity failed; almost certainly a simulator bug."""

    def __init__(self, lhs: int, rhs: int, message: str = ""):
        self.lhs = lhs
        self.rhs = rhs
        detail = message or f"conservation identity violated: lhs={lhs} rhs={rhs}"
        super().__init__(detail)


class UndefinedStatisticError(SimulatorError):
    """A statistic was requested that does not exist for this trace."""


class TuningFailedError(SimulatorError):
    """Every stepsize on the tuning grid produced an unusable run."""

    def __init__(self, message: str, points=None):
        self.points = points or []
        super().__init__(message)

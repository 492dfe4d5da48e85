"""Exception types raised by the simulator."""


class SimulationError(Exception):
    """Base class for all simulator faults."""


class InvalidQuaternionError(SimulationError):
    """Quaternion norm too far from one for a rotation to be meaningful."""


class IntegrationFaultError(SimulationError):
    """Integrator produced a non-finite state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class GradientSingularityError(SimulationError):
    """Constraint gradient requested at a non-differentiable point."""


class InitializationError(SimulationError):
    """Episode initialization exceeded the resampling budget."""


class SafetyFaultError(SimulationError):
    """Hard safety constraints were mutually infeasible."""


class ConfigError(SimulationError):
    """Configuration file failed schema validation."""

    def __init__(self, field, message):
        super().__init__(f"config field {field!r}: {message}")
        self.field = field

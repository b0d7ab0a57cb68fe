"""Typed errors raised by the simulator.

ConfigError covers everything a user can fix by editing a config file or a
flag. NumericalError and its subclasses cover failures of the numerics
themselves; the command line maps the two families to distinct exit codes.
"""


class OptomechError(Exception):
    """Base class for every error raised by optomech_bec."""


class ConfigError(OptomechError):
    """Invalid or inconsistent configuration.

    Args:
        message (str): Human readable description.
        key (str): Offending configuration key, when there is one.
    """

    def __init__(self, message, key=None):
        self.key = key
        if key and key not in message:
            message = f"{key}: {message}"
        super().__init__(message)


class NumericalError(OptomechError):
    """A computation could not produce a trustworthy result.

    Args:
        message (str): Human readable description.
        state (object): Optional diagnostic payload (state vector, matrix).
    """

    def __init__(self, message, state=None):
        self.state = state
        super().__init__(message)


class NonFiniteStateError(NumericalError):
    """A right-hand side or integrator step produced NaN or infinity."""


class StabilityGuardError(NumericalError):
    """The explicit step is too large for the fastest mode of the system."""


class SofteningPoleError(NumericalError):
    """The effective mechanical stiffness omega_m + 2*xi2*I vanishes."""


class NoStationaryStateError(NumericalError):
    """A stationary covariance was requested for an unstable drift matrix."""


class UnphysicalStateError(NumericalError):
    """A covariance matrix or variance violates basic positivity."""


class NonConvergenceError(NumericalError):
    """An iterative procedure did not settle within its budget."""


class InternalConsistencyError(NumericalError):
    """A result contradicts a mathematical guarantee of the model."""

"""Exception types raised by the simulation and kinetic solvers."""


class EnskogError(Exception):
    """Base class for all errors raised by :mod:`enskoglab`."""


class ConfigError(EnskogError, ValueError):
    """Physically invalid parameters (overlap, oversize spheres, bad sizes)."""


class OverlapError(ConfigError):
    pass


class PackingError(EnskogError):
    pass


class DynamicsError(EnskogError, RuntimeError):
    """A trajectory could not be continued faithfully."""


class EventBudgetError(DynamicsError):
    pass


class TripleContactError(DynamicsError):
    pass


class BracketError(DynamicsError):
    pass


class StepSizeError(DynamicsError):
    pass


class StabilityError(EnskogError, RuntimeError):
    pass


class ResolutionError(EnskogError, RuntimeError):
    pass


class ProbeAtContactError(EnskogError, ValueError):
    pass

"""Exception hierarchy shared by every module of the package."""


class ButterflyError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(ButterflyError, ValueError):
    """Invalid parameter or configuration value."""


class ShapeError(ButterflyError, ValueError):
    """Array dimensions do not match the topology."""


class UnsupportedSchemeError(ButterflyError):
    """A scheme was asked to run on a topology it does not support."""


class DegenerateChannelError(ButterflyError, ArithmeticError):
    """Channel realization falls on a measure-zero failure set."""


class PlacementError(ButterflyError, ValueError):
    """Cache placement received inconsistent messages."""


class EstimationError(ButterflyError, ValueError):
    """A rate curve cannot support a slope estimate."""


class InvalidCutError(ButterflyError, ValueError):
    """A genie cut does not separate its two node groups."""


class NumericError(ButterflyError, ArithmeticError):
    """Numerical input outside the domain of a formula."""

"""Degrees-of-freedom simulator for the two-way butterfly network."""

from .errors import (
    ButterflyError,
    ConfigurationError,
    DegenerateChannelError,
    EstimationError,
    InvalidCutError,
    NumericError,
    PlacementError,
    ShapeError,
    UnsupportedSchemeError,
)
from .netmodel import ChannelRealization, MessageSet, Topology, sample_channels

__version__ = "0.1.0"

"""Numerical verification of semiclassical trace asymptotics at degenerate minima."""

from .errors import DegenTraceError
from .model import PRESETS, PotentialModel, get_preset, parse_potential, validate_hypotheses
from .testfn import TestFunction

__version__ = "0.1.0"

__all__ = ["DegenTraceError", "PRESETS", "PotentialModel", "TestFunction", "get_preset", "parse_potential",
           "validate_hypotheses", "__version__"]

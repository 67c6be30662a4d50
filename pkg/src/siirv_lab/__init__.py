"""Covers and learners for sums of independent integer random variables."""

from . import approx, covers, expfam, families, geometry, learning, pmf_core
from .constants import Constants, get_constants
from .errors import (AssumptionViolation, BracketFailure, BudgetExceeded, ConfigError,
                     DegenerateCone, GridOverflow, InfeasibleProjection, SiirvLabError,
                     WindowOverflow)

__version__ = "0.1.0"

__all__ = [
    "approx", "covers", "expfam", "families", "geometry", "learning", "pmf_core",
    "Constants", "get_constants", "AssumptionViolation", "BracketFailure", "BudgetExceeded",
    "ConfigError", "DegenerateCone", "GridOverflow", "InfeasibleProjection", "SiirvLabError",
    "WindowOverflow",
]

"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so each class records which bucket it
belongs to (configuration, assumption, or resource overflow).
"""


class SiirvLabError(Exception):
    """Base class for all library errors."""


class ConfigError(SiirvLabError, ValueError):
    """Invalid user input (bad eps, malformed spec, inconsistent cone, ...)."""


class AssumptionViolation(SiirvLabError):
    """A structural assumption on the family failed numerically."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class WindowOverflow(SiirvLabError):
    """A pmf window would exceed the configured length cap."""


class GridOverflow(SiirvLabError):
    """A net or cover would need more candidates than allowed."""


class BudgetExceeded(SiirvLabError):
    """A sample or candidate budget was exhausted."""


class DegenerateCone(SiirvLabError):
    """The cone is {0}; no pivot vector exists."""


class InfeasibleProjection(SiirvLabError):
    """No c in [0, 1] puts the projected vector on the sphere."""


class BracketFailure(SiirvLabError):
    """A bisection path does not bracket the target value."""

    def __init__(self, message, endpoint_values=None):
        super().__init__(message)
        self.endpoint_values = endpoint_values

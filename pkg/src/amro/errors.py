"""
Exception hierarchy for AMRO.

Each error carries the process exit code the CLI reports for it.
"""


class AmroError(Exception):
    """Base class for all AMRO errors."""

    exit_code = 1


class ConfigError(AmroError, ValueError):
    """Scenario, graph or parameter configuration is invalid or missing."""

    exit_code = 2


class StateMismatchError(AmroError):
    """Persisted state (e.g. a pheromone snapshot) does not fit the configured graph."""

    exit_code = 3


class DataError(AmroError, ValueError):
    """An input dataset is empty, unreadable or malformed."""

    exit_code = 4


class RoutingError(AmroError):
    """No node can be selected at some layer."""


class InfiniteDivergenceError(AmroError, ArithmeticError):
    """KL divergence is unbounded because the prediction has zero mass on target support."""


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(error, AmroError):
        return error.exit_code
    return 1

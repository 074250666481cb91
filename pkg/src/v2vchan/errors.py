"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes (2 config, 3 data, 4 numerical).
Plain usage mistakes (bad argument values) raise :class:`ValueError`.
"""


class ConfigError(ValueError):
    """Invalid map, parameter table or run configuration."""


class DataError(ValueError):
    """Malformed or inconsistent input data (tracks, tensors, trajectories)."""


class NumericalError(ArithmeticError):
    """A computation is undefined or failed to converge."""


class UndefinedEstimateError(NumericalError):
    """An estimator has no defined value for the given input."""


class ZeroPowerError(NumericalError):
    """A power-weighted statistic was requested for an all-zero profile."""

"""Exception types shared across histcal.

Each type carries the process exit code the CLI uses when it escapes a command.
"""


class HistcalError(Exception):
    exit_code = 1


class ConfigError(HistcalError, ValueError):
    """Invalid configuration, bad grid spec, missing input path."""
    exit_code = 2


class DataError(HistcalError, ValueError):
    """Input data that cannot be parsed or does not cover what was asked of it."""
    exit_code = 3


class DimensionError(HistcalError, ValueError):
    """Array shapes that do not compose."""
    exit_code = 3


class DomainError(HistcalError, ValueError):
    """A value outside the mathematical domain of an operation."""
    exit_code = 3


class StateError(HistcalError, RuntimeError):
    """Objects used together that do not belong together, e.g. a cache from another model."""
    exit_code = 1


class DivergenceError(HistcalError, RuntimeError):
    exit_code = 4

    def __init__(self, *args, epoch: int = None, step: int = None):
        super().__init__(*args)
        self.epoch = epoch
        self.step = step

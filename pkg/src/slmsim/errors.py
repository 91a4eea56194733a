"""Exception hierarchy.

Errors split into two families so the CLI can map them onto exit codes:
``ConfigError`` (bad or infeasible inputs, exit 1) and ``SimulationError``
(the simulation itself failed, exit 2).
"""


class SlmsimError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SlmsimError):
    """Inputs are invalid or cannot be served as configured."""


class ValidationError(ConfigError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ParseError(ConfigError):
    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class NonFitting(ConfigError):
    """Model weights do not fit in the memory available to them."""


class ZeroCapacity(ConfigError):
    """Weights fit, but not even one request of the given length does."""


class InvalidBatch(ConfigError):
    pass


class OrderError(ConfigError):
    """Sweep points are not successive doublings of the batch cap."""


class SimulationError(SlmsimError):
    pass


class LivelockError(SimulationError):
    pass

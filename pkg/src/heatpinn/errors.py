"""Exception classes shared across the package."""


class HeatPinnError(Exception):
    pass


class ContractError(HeatPinnError, ValueError):
    """A caller broke a documented precondition (shapes, labels, lengths)."""


class DomainError(HeatPinnError, ValueError):
    """A query fell outside the range where a quantity is defined."""


class RequestError(ContractError):
    """An unknown derivative label was requested."""


class NumericError(HeatPinnError, ArithmeticError):
    """A non-finite value appeared.

    ``slot`` names the parameter slot (layer) where it was detected and
    ``losses`` carries per-term loss values when known.
    """

    def __init__(self, message: str, slot: str | None = None, losses: dict | None = None):
        super().__init__(message)
        self.slot = slot
        self.losses = losses


class FormatError(HeatPinnError, ValueError):
    """A checkpoint file is malformed; ``field`` names what was wrong."""

    def __init__(self, message: str, field: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ConfigError(HeatPinnError, ValueError):
    """An experiment config is malformed; ``key`` is the offending key path."""

    def __init__(self, message: str, key: str):
        super().__init__(f"{key}: {message}")
        self.key = key

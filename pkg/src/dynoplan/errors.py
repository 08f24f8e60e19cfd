"""Exception hierarchy shared by all dynoplan modules."""


class DynoPlanError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(DynoPlanError, ValueError):
    """A state does not match the dimension of the task it is used in."""


class StateError(DynoPlanError, ValueError):
    """A state is malformed: non-finite entries or a discrete index out of range."""


class HorizonError(DynoPlanError, ValueError):
    """A rollout horizon is negative or exceeds the configured maximum."""


class InitiationError(DynoPlanError):
    """An option was executed from a state outside its initiation set."""


class FitError(DynoPlanError, ValueError):
    """A model could not be fitted from the supplied data."""


class FormatError(DynoPlanError, ValueError):
    """A persisted record could not be parsed.

    ``line`` is the 1-based line number of the offending record, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(DynoPlanError, ValueError):
    """An experiment configuration is invalid."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)

"""Exception types raised across the package."""


class CapacityError(ValueError):
    """A requested graph or enumeration is larger than the configured cap."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class SearchError(RuntimeError):
    """A bracketing or root search did not converge."""


class FitError(RuntimeError):
    """A regression could not be carried out on the supplied data."""


class ConfigError(ValueError):
    """Invalid experiment configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None and line is not None:
            where = f"{source}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        elif source is not None:
            where = f"{source}: "
        super().__init__(where + message)

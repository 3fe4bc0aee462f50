"""Exception types shared across the package."""


class MMTError(Exception):
    """Base class for every error raised deliberately by this package."""


class DimensionError(MMTError, ValueError):
    pass


class NumericalError(MMTError, ArithmeticError):
    pass


class ParseError(MMTError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class InitializationError(MMTError, ValueError):
    pass


class ConfigError(MMTError, ValueError):
    """Model kind, feature files, checkpoints or vocabularies do not fit together."""

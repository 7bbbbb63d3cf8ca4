"""Exception types shared across the package."""


class TubeSearchError(Exception):
    """Base class for package-specific errors."""


class EmptyDescriptionError(TubeSearchError):
    """A description has no in-vocabulary tokens left after filtering."""


class DataFormatError(TubeSearchError):
    """A data file violates its schema.

    Carries the offending path/line when known so CLI errors point at the
    exact record.
    """

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc += f"line {line}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line

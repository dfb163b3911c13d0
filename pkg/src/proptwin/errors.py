"""Exception types shared across the package."""


class _LocatedError(ValueError):
    """ValueError that can carry the file path and line number it came from."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        if path is not None:
            where = str(path) if line is None else f"{path}:{line}"
            message = f"{where}: {message}"
        super().__init__(message)


class FileFormatError(_LocatedError):
    """A file could not be parsed: bad header, malformed row, truncated body."""


class ValidationError(_LocatedError):
    """Parsed content violates a documented invariant."""


class FitError(RuntimeError):
    """A distribution fit did not converge; ``best`` holds the last iterate."""

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)

"""Exception and warning classes raised across the package."""


class EmptyCloudError(ValueError):
    """Raised when an operation needs at least one point."""

    def __init__(self, message="empty cloud"):
        super().__init__(message)


class DegenerateGeometryError(ValueError):
    pass


class InsufficientCorrespondencesError(RuntimeError):
    pass


class AllPointsTrimmedError(RuntimeError):
    def __init__(self, message="all points trimmed"):
        super().__init__(message)


class PlyParseError(ValueError):
    """Malformed PLY input; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class IllConditionedWarning(UserWarning):
    """Point-to-plane normal equations were damped to stay solvable."""

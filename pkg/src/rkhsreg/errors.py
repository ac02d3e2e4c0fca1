"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class SchemaMismatchError(InvalidArgumentError):
    def __init__(self, left, right):
        self.left = left
        self.right = right
        super().__init__(f"feature schemas differ: {left} vs {right}")


class NoOverlapError(RuntimeError):
    """No point pair falls inside the kernel cutoff at the starting lengthscale."""

    def __init__(self, cutoff_radius: float):
        self.cutoff_radius = cutoff_radius
        super().__init__(f"no overlapping pairs within cutoff radius {cutoff_radius:.9g} m")


class ParseError(ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(ValueError):
    """Bad configuration: missing key, unknown key, or out-of-range value."""


class EmptyReportError(ValueError):
    """An evaluator found nothing to evaluate."""

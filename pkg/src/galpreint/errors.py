"""Exception types raised across the package."""


class NearPiRotation(ValueError):
    """A logarithm was requested for a rotation whose angle is too close to pi."""


class MethodDiverged(RuntimeError):
    """A Monte-Carlo realization produced an error outside the log chart."""


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class NonMonotonicTimestamp(ParseError):
    pass


class SegmentSkipped(RuntimeError):
    pass

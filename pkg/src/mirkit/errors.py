"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class MirkitError(Exception):
    exit_code = 1


class UsageError(MirkitError, ValueError):
    """Inconsistent flags or arguments."""

    exit_code = 2


class InputParseError(MirkitError, ValueError):
    """A file or document could not be parsed."""

    exit_code = 3


class WavFormatError(InputParseError):
    pass


class PreconditionError(MirkitError, ValueError):
    """Numerical precondition violated (shapes, ranges, degenerate data)."""

    exit_code = 4

"""Exception types shared across the package."""


class SparseLawError(Exception):
    """Base class; ``kind`` is the machine-readable tag used by the CLI."""

    kind = "error"


class DomainError(SparseLawError, ValueError):
    kind = "domain"


class UnreachableLossError(SparseLawError, ValueError):
    """No finite size or data budget attains the requested loss."""

    kind = "unreachable-loss"


class DegenerateDataError(SparseLawError, ValueError):
    kind = "degenerate-data"


class EmptySupportError(SparseLawError, ValueError):
    kind = "empty-support"


class NonUnimodalError(SparseLawError, RuntimeError):
    """The sampled objective has more than one descent/ascent switch."""

    kind = "non-unimodal"


class NoSolutionError(SparseLawError, ValueError):
    kind = "no-solution"


class DivergedError(SparseLawError, RuntimeError):
    kind = "diverged"


class EmptyInputError(SparseLawError, ValueError):
    kind = "empty-input"


class FormatError(SparseLawError, ValueError):
    kind = "format"


class RunTableError(SparseLawError, ValueError):
    """Raised while ingesting a run table.

    ``line`` is the 1-based physical line of the offending row, when known.
    """

    kind = "run-table"

    def __init__(self, message, line=None, kind=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        if kind is not None:
            self.kind = kind

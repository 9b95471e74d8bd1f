"""Exception hierarchy shared by every service.

Exit codes: 1 for validation errors, 2 for I/O and format errors.
"""


class Mir3dError(Exception):
    """Base class for all engine errors."""

    exit_code = 2


class DataValidationError(Mir3dError, ValueError):
    """An invariant, identifier or usage check failed."""

    exit_code = 1


class FormatError(Mir3dError):
    """A file could not be decoded."""

    exit_code = 2


class ManifestParseError(FormatError):
    """Malformed manifest document."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None) -> None:
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class TruncationError(FormatError):
    """Declared record count does not match the bytes present."""


class DataError(FormatError):
    """Decoded values are not finite."""


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code contract."""
    if isinstance(exc, Mir3dError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return 2
    return 1

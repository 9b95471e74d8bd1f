"""Text file reads that fail as format errors."""

from pathlib import Path

from ..errors import FormatError


def read_text_file(path: Path) -> str:
    """Read a UTF-8 text file.

    Raises:
        FormatError: The bytes are not valid UTF-8
    """
    try:
        return path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(f"{path}: not valid UTF-8 text ({e.reason} at byte {e.start})") from e

"""Atomic file and directory writes.

Outputs are written next to their destination under a temporary name and
moved into place with a single rename, so an interrupted run never leaves a
partial index or report behind.
"""

import os
import shutil
import tempfile
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

from ..errors import DataValidationError


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write bytes to path via temp file + rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    tmp = Path(tmp_name)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _replaceable(path: Path, marker: str | None) -> bool:
    if not path.is_dir():
        return False
    if marker is not None and (path / marker).is_file():
        return True
    return not any(path.iterdir())


@contextmanager
def atomic_directory(path: Path, marker: str | None = None) -> Iterator[Path]:
    """Yield a staging directory that replaces `path` only on success.

    An existing `path` is replaced only if it is an empty directory or holds
    a file named `marker`.

    Raises:
        DataValidationError: `path` exists and is not ours to replace
    """
    if path.exists() and not _replaceable(path, marker):
        raise DataValidationError(
            f"refusing to replace {path}: not an empty directory"
            + (f" and has no {marker}" if marker else "")
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent))
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if path.exists():
        shutil.rmtree(path)
    os.replace(staging, path)

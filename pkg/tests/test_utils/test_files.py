"""Tests for text file reading."""

import pytest

from mir3d.errors import FormatError
from mir3d.utils.files import read_text_file


class TestReadTextFile:
    """Tests for read_text_file."""

    def test_reads_utf8(self, temp_dir):
        path = temp_dir / "notes.yaml"
        path.write_text("organ: Leber\nnote: größe\n", encoding="utf-8")
        assert read_text_file(path) == "organ: Leber\nnote: größe\n"

    def test_invalid_utf8_is_format_error(self, temp_dir):
        path = temp_dir / "manifest.yaml"
        path.write_bytes(b"dataset_name: \xff\xfe\n")
        with pytest.raises(FormatError, match="not valid UTF-8"):
            read_text_file(path)

    def test_missing_file_is_os_error(self, temp_dir):
        with pytest.raises(OSError):
            read_text_file(temp_dir / "absent.yaml")

"""Utilities module."""

from .atomic import atomic_directory, atomic_write_bytes, atomic_write_text
from .files import read_text_file
from .formatters import (
    format_captions_csv,
    format_histogram_csv,
    format_jsonl,
    format_metric_csv,
    format_ranked_csv,
    format_report_json,
    format_summary_csv,
    summary_table,
)
from .log import configure_logging, console

__all__ = [
    "atomic_directory",
    "atomic_write_bytes",
    "atomic_write_text",
    "configure_logging",
    "console",
    "format_captions_csv",
    "format_histogram_csv",
    "format_jsonl",
    "format_metric_csv",
    "format_ranked_csv",
    "format_report_json",
    "format_summary_csv",
    "read_text_file",
    "summary_table",
]

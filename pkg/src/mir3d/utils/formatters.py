"""CSV, JSON and console renderings of engine results.

CSV outputs are plain comma-separated with a header row and `\\n` line
endings. Floats are written with a fixed precision so reruns are
byte-identical.
"""

import csv
import io
import json
from collections.abc import Iterable, Sequence

from pydantic import BaseModel
from rich.table import Table

from ..models.evaluation import MetricReport
from ..models.lesion import CaptionRecord
from ..models.retrieval import RankedList


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _csv(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def format_ranked_csv(ranked: RankedList) -> str:
    """rank,volume_id,score rows in rank order."""
    return _csv(
        ("rank", "volume_id", "score"),
        ((item.rank, item.volume_id, _fmt(item.score)) for item in ranked.items),
    )


def format_metric_csv(report: MetricReport) -> str:
    """Macro metrics as method,criterion,k,value; k is `AP` for average precision."""
    rows: list[tuple[str, str, str, str]] = []
    for name, value in report.macro.items():
        k = name.removeprefix("P@") if name.startswith("P@") else name
        rows.append((report.method, report.criterion, k, _fmt(value)))
    return _csv(("method", "criterion", "k", "value"), rows)


def format_report_json(report: MetricReport) -> str:
    """Full report with per-query values."""
    return json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def format_summary_csv(reports: list[MetricReport], k_list: list[int]) -> str:
    """One row per method, columns P@k for the k list then AP."""
    header = ["method", *(f"P@{k}" for k in k_list), "AP"]
    rows = [
        [report.method, *(_fmt(report.macro[f"P@{k}"]) for k in k_list), _fmt(report.macro["AP"])]
        for report in reports
    ]
    return _csv(header, rows)


def format_histogram_csv(histogram: dict[str, dict[int, int]], bin_width_cm: float) -> str:
    """organ,bin_low_cm,bin_high_cm,count rows; empty bins are omitted."""
    rows = [
        (organ, _fmt(b * bin_width_cm), _fmt((b + 1) * bin_width_cm), count)
        for organ, bins in histogram.items()
        for b, count in bins.items()
    ]
    return _csv(("organ", "bin_low_cm", "bin_high_cm", "count"), rows)


def format_captions_csv(records: Sequence[CaptionRecord]) -> str:
    """volume_id,caption rows, one per volume."""
    return _csv(("volume_id", "caption"), ((r.volume_id, r.text) for r in records))


def format_jsonl(records: Sequence[BaseModel]) -> str:
    """One JSON object per line."""
    return "".join(record.model_dump_json() + "\n" for record in records)


def summary_table(reports: list[MetricReport], k_list: list[int], title: str = "Retrieval metrics") -> Table:
    """Method x metric grid for the console."""
    table = Table(title=title)
    table.add_column("method", style="bold")
    for k in k_list:
        table.add_column(f"P@{k}", justify="right")
    table.add_column("AP", justify="right")
    for report in reports:
        table.add_row(
            report.method,
            *(f"{report.macro[f'P@{k}']:.4f}" for k in k_list),
            f"{report.macro['AP']:.4f}",
        )
    return table

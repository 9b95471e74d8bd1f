"""Command-line interface for the retrieval engine and benchmark harness.

Results go to stdout as CSV (or to files); logs and summaries go to stderr.
Exit codes: 0 success, 1 validation or usage error, 2 I/O or format error.
"""

import argparse
import logging
import sys
from collections import Counter, defaultdict
from pathlib import Path
from typing import NoReturn

from pydantic import ValidationError as PydanticValidationError
from rich.table import Table

from .config import configure, settings
from .errors import DataValidationError, FormatError, Mir3dError, exit_code_for
from .models import (
    LESION_GROUP_ORDER,
    POOLING_METHODS,
    RETRIEVAL_METHODS,
    CaptionRecord,
    DatasetManifest,
    LesionGroup,
    LesionRecord,
    SliceMetrics,
    SynthConfig,
)
from .services.caption_service import caption_record
from .services.embedding_service import load_embeddings
from .services.engine import RetrievalEngine, build_slice_index
from .services.evaluation_service import lesion_size_histogram, run_experiment
from .services.index_service import save_index
from .services.lesion_service import LesionPipeline
from .services.manifest_service import (
    augment_train_split,
    load_manifest,
    load_volume_embeddings,
    save_manifest,
    with_ground_truth,
)
from .services.synth_service import MANIFEST_NAME, synth_generate
from .services.volume_retrieval_service import build_volume_index
from .utils.atomic import atomic_write_text
from .utils.files import read_text_file
from .utils.formatters import (
    format_captions_csv,
    format_histogram_csv,
    format_jsonl,
    format_metric_csv,
    format_ranked_csv,
    format_report_json,
    format_summary_csv,
    summary_table,
)
from .utils.log import configure_logging, console

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1, the validation-error code."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _path(value: str | Path) -> Path:
    """Resolve a command-line path against the configured workdir."""
    path = Path(value)
    return path if path.is_absolute() else settings.workdir / path


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from e
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got '{text}'")
    return values


def _method_list(text: str) -> list[str]:
    methods = [part.strip() for part in text.split(",") if part.strip()]
    unknown = [m for m in methods if m not in RETRIEVAL_METHODS]
    if unknown or not methods:
        raise argparse.ArgumentTypeError(
            f"unknown method(s) {', '.join(unknown) or text!r}; choose from {', '.join(RETRIEVAL_METHODS)}"
        )
    return methods


def _write(path: Path, text: str) -> None:
    atomic_write_text(path, text)
    logger.info("wrote %s", path)


def _read_lesions(path: Path) -> list[LesionRecord]:
    records: list[LesionRecord] = []
    for number, line in enumerate(read_text_file(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(LesionRecord.model_validate_json(line))
        except PydanticValidationError as e:
            raise FormatError(f"{path}:{number}: malformed lesion record: {e.errors()[0]['msg']}") from e
    return records


def _records_by_volume(records: list[LesionRecord]) -> dict[str, list[LesionRecord]]:
    grouped: dict[str, list[LesionRecord]] = defaultdict(list)
    for record in records:
        grouped[record.volume_id].append(record)
    return grouped


def _dataset_table(manifest: DatasetManifest) -> Table:
    counts = Counter((entry.split, entry.lesion_group) for entry in manifest.volumes)
    table = Table(title=f"{manifest.dataset_name} (dim {manifest.embedding_dim})")
    table.add_column("split", style="bold")
    for group in LESION_GROUP_ORDER:
        table.add_column(group, justify="right")
    table.add_column("total", justify="right")
    for split in ("train", "test"):
        row = [counts[(split, group)] for group in LESION_GROUP_ORDER]
        table.add_row(split, *(str(n) for n in row), str(sum(row)))
    return table


# ── subcommands ──────────────────────────────────────────────


def cmd_ingest(args: argparse.Namespace) -> int:
    """Validate a manifest and every file it references; optionally augment the train split."""
    manifest_path = _path(args.manifest)
    manifest = load_manifest(manifest_path)

    if args.donor:
        if args.out is None:
            raise DataValidationError("--out is required with --donor")
        out = _path(args.out)
        if out.parent.resolve() != manifest.base_dir.resolve():
            raise DataValidationError("--out must sit next to the source manifest so relative paths still resolve")
        donors = [load_manifest(_path(p)) for p in args.donor]
        manifest = augment_train_split(manifest, donors, args.donor_count, args.seed)

    for entry in manifest.volumes:
        load_volume_embeddings(manifest, entry)
        if entry.caption_embedding_path is not None:
            caption = load_embeddings(manifest.resolve(entry.caption_embedding_path), entry.volume_id)
            if len(caption) == 0 or caption.dim != manifest.embedding_dim:
                raise DataValidationError(f"volume '{entry.volume_id}': caption embedding is empty or has the wrong dim")

    mismatched = LesionPipeline(manifest).check_ground_truth()
    if mismatched:
        raise DataValidationError(
            f"ground-truth labels disagree with masks for: {', '.join(mismatched)} "
            "(run `lesions --update-ground-truth`)"
        )

    if args.donor:
        save_manifest(_path(args.out), manifest)
    console.print(_dataset_table(manifest))
    console.print(f"[green]✓[/green] {len(manifest.volumes)} volumes ingested")
    return 0


def cmd_build_index(args: argparse.Namespace) -> int:
    """Build and persist the slice index or one pooled volume index."""
    if args.mode == "volume" and args.pooling is None:
        raise DataValidationError("--pooling is required with --mode volume")
    if args.mode == "slice" and args.pooling is not None:
        raise DataValidationError("--pooling only applies to --mode volume")

    manifest = load_manifest(_path(args.manifest))
    out = _path(args.out)
    if args.mode == "slice":
        index = build_slice_index(manifest)
    else:
        index = build_volume_index(manifest, args.pooling)
    save_index(index, out)
    console.print(f"[green]✓[/green] {index.kind} index: {len(index)} entries, dim {index.dim} -> {out}")
    return 0


def cmd_lesions(args: argparse.Namespace) -> int:
    """Extract lesion records and slice metrics from every volume with a lesion mask."""
    manifest_path = _path(args.manifest)
    manifest = load_manifest(manifest_path)
    pipeline = LesionPipeline(manifest, args.connectivity)

    records: list[LesionRecord] = []
    metrics: list[SliceMetrics] = []
    labels: dict[str, tuple[bool, LesionGroup]] = {}
    for entry in sorted(manifest.volumes, key=lambda e: e.volume_id):
        if entry.lesion_mask_path is None:
            logger.debug("volume %s has no lesion mask, skipped", entry.volume_id)
            continue
        result = pipeline.process(entry)
        records.extend(result.records)
        metrics.extend(result.slice_metrics)
        labels[entry.volume_id] = (result.lesion_flag, result.lesion_group)

    out = _path(args.out)
    _write(out / "lesions.jsonl", format_jsonl(records))
    _write(out / "slice_metrics.jsonl", format_jsonl(metrics))

    changed = [
        volume_id
        for volume_id, label in labels.items()
        if (manifest.get(volume_id).lesion_flag, manifest.get(volume_id).lesion_group) != label
    ]
    if args.update_ground_truth:
        save_manifest(manifest_path, with_ground_truth(manifest, labels))
        console.print(f"[green]✓[/green] ground truth updated for {len(changed)} volume(s)")
    elif changed:
        logger.warning("labels differ from masks for %d volume(s): %s", len(changed), ", ".join(changed))

    console.print(f"[green]✓[/green] {len(records)} lesions in {len(labels)} volumes -> {out}")
    return 0


def cmd_captions(args: argparse.Namespace) -> int:
    """Generate one caption per volume from its lesions."""
    manifest = load_manifest(_path(args.manifest))
    pipeline = LesionPipeline(manifest)
    known = _records_by_volume(_read_lesions(_path(args.lesions))) if args.lesions else None

    captions: list[CaptionRecord] = []
    for entry in sorted(manifest.volumes, key=lambda e: e.volume_id):
        if known is not None:
            lesions = known.get(entry.volume_id, [])
        elif entry.lesion_mask_path is not None:
            _, _, lesions = pipeline.recompute_ground_truth(entry)
        elif entry.lesion_group == "G0":
            lesions = []
        else:
            logger.warning("volume %s has lesions but no mask or records, skipped", entry.volume_id)
            continue
        captions.append(caption_record(entry.volume_id, entry.organ_tag, lesions))

    if args.out:
        _write(_path(args.out), format_jsonl(captions))
    sys.stdout.write(format_captions_csv(captions))
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    """Rank indexed volumes for one query volume or caption embedding."""
    if args.volume is None and args.caption_embedding is None:
        raise DataValidationError("give --volume, --caption-embedding or both")
    manifest = load_manifest(_path(args.manifest))
    engine = RetrievalEngine.from_index_dir(manifest, _path(args.index_dir), [args.method])

    entry = manifest.get(args.volume) if args.volume is not None else None
    query = load_volume_embeddings(manifest, entry) if entry is not None and args.method != "caption" else None
    caption = None
    if args.caption_embedding is not None:
        caption = engine.caption_vector(load_embeddings(_path(args.caption_embedding)))
    elif entry is not None and args.method in ("caption", "ensemble"):
        caption = engine.load_caption_embedding(entry)

    ranked = engine.rank_embeddings(args.method, query, caption, settings.default_k if args.k is None else args.k)
    sys.stdout.write(format_ranked_csv(ranked))
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Run every requested method over the test split and report P@k and AP."""
    manifest = load_manifest(_path(args.manifest))
    methods: list[str] = args.methods or list(RETRIEVAL_METHODS)
    k_list: list[int] = settings.k_list if args.k is None else args.k

    if args.index_dir is not None:
        engine = RetrievalEngine.from_index_dir(manifest, _path(args.index_dir), methods)
    else:
        engine = RetrievalEngine.from_manifest(manifest, methods)

    reports = [
        run_experiment(engine, method, args.criterion, k_list, ap_depth=args.ap_depth)
        for method in methods
    ]

    if args.out is not None:
        out = _path(args.out)
        for report in reports:
            _write(out / f"{report.method}.csv", format_metric_csv(report))
            _write(out / f"{report.method}.json", format_report_json(report))
        _write(out / "summary.csv", format_summary_csv(reports, k_list))

    console.print(summary_table(reports, k_list, title=f"{manifest.dataset_name} / {args.criterion}"))
    sys.stdout.write(format_summary_csv(reports, k_list))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    """Histogram of the largest lesion length per volume and organ."""
    if (args.lesions is None) == (args.manifest is None):
        raise DataValidationError("give exactly one of --lesions or --manifest")
    if args.lesions is not None:
        records = _read_lesions(_path(args.lesions))
    else:
        manifest = load_manifest(_path(args.manifest))
        pipeline = LesionPipeline(manifest)
        records = [
            record
            for entry in manifest.volumes
            if entry.lesion_mask_path is not None
            for record in pipeline.recompute_ground_truth(entry)[2]
        ]

    bin_width = settings.hist_bin_width_cm if args.bin_width is None else args.bin_width
    text = format_histogram_csv(lesion_size_histogram(records, bin_width), bin_width)
    if args.out:
        _write(_path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    """Write a planted-structure synthetic dataset."""
    overrides = {
        "seed": args.seed,
        "num_groups": args.num_groups,
        "volumes_per_group": args.volumes_per_group,
        "slices_per_volume": args.slices_per_volume,
        "dim": args.dim,
        "cluster_separation": args.separation,
        "noise_sigma": args.sigma,
        "with_masks": args.with_masks or None,
    }
    config = SynthConfig(**{key: value for key, value in overrides.items() if value is not None})
    out = _path(args.out)
    manifest = synth_generate(config, out)
    console.print(_dataset_table(manifest))
    console.print(f"[green]✓[/green] manifest -> {out / MANIFEST_NAME}")
    return 0


# ── parser ───────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mir3d", description="3D medical image retrieval engine and benchmark harness.")
    parser.add_argument("--workdir", type=Path, default=None, help="resolve relative paths against this directory")
    parser.add_argument("--config", type=Path, default=None, help="YAML settings file")
    parser.add_argument("--threads", type=int, default=None, help="internal parallelism cap (env THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate a manifest and its files")
    p.add_argument("--manifest", required=True, help="dataset manifest (YAML)")
    p.add_argument("--donor", action="append", default=[], help="donor manifest for train augmentation (repeatable)")
    p.add_argument("--donor-count", type=int, default=0, help="number of donor volumes to add")
    p.add_argument("--seed", type=int, default=0, help="seed for donor sampling")
    p.add_argument("--out", default=None, help="where to write the augmented manifest")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("build-index", help="build and persist a train-split index")
    p.add_argument("--manifest", required=True, help="dataset manifest (YAML)")
    p.add_argument("--mode", choices=("slice", "volume"), required=True, help="slice or pooled-volume index")
    p.add_argument("--pooling", choices=POOLING_METHODS, default=None, help="pooling method, required with --mode volume")
    p.add_argument("--out", required=True, help="index directory")
    p.set_defaults(handler=cmd_build_index)

    p = sub.add_parser("lesions", help="extract lesion records and slice metrics")
    p.add_argument("--manifest", required=True, help="dataset manifest (YAML)")
    p.add_argument("--out", required=True, help="output directory for lesions.jsonl and slice_metrics.jsonl")
    p.add_argument("--connectivity", type=int, choices=(6, 26), default=None, help="3D neighbourhood (default 26)")
    p.add_argument("--update-ground-truth", action="store_true", help="rewrite manifest labels from the masks")
    p.set_defaults(handler=cmd_lesions)

    p = sub.add_parser("captions", help="generate caption text per volume")
    p.add_argument("--manifest", required=True, help="dataset manifest (YAML)")
    p.add_argument("--lesions", default=None, help="lesion records (JSONL) instead of re-reading masks")
    p.add_argument("--out", default=None, help="caption records (JSONL)")
    p.set_defaults(handler=cmd_captions)

    p = sub.add_parser("query", help="rank indexed volumes for one query")
    p.add_argument("--manifest", required=True, help="dataset manifest (YAML)")
    p.add_argument("--index-dir", required=True, help="directory written by build-index")
    p.add_argument("--volume", default=None, help="query volume id")
    p.add_argument("--caption-embedding", default=None, help="EMB1 file whose first row is the caption embedding")
    p.add_argument("--method", choices=RETRIEVAL_METHODS, required=True, help="retrieval method")
    p.add_argument("--k", type=int, default=None, help="number of results (default 10)")
    p.set_defaults(handler=cmd_query)

    p = sub.add_parser("evaluate", help="P@k and AP of retrieval methods over the test split")
    p.add_argument("--manifest", required=True, help="dataset manifest (YAML)")
    p.add_argument("--index-dir", default=None, help="persisted indexes; built in memory when omitted")
    p.add_argument("--methods", type=_method_list, default=None, help="comma-separated methods (default all)")
    p.add_argument("--criterion", choices=("flag", "group"), default="group", help="relevance criterion")
    p.add_argument("--k", type=_int_list, default=None, help="comma-separated cutoffs (default 3,5,10)")
    p.add_argument("--ap-depth", type=int, default=None, help="truncate AP at this rank")
    p.add_argument("--out", default=None, help="report directory")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("stats", help="lesion size histogram per organ")
    p.add_argument("--lesions", default=None, help="lesion records (JSONL)")
    p.add_argument("--manifest", default=None, help="dataset manifest; lesions are re-extracted from masks")
    p.add_argument("--bin-width", type=float, default=None, help="bin width in cm (default 1.0)")
    p.add_argument("--out", default=None, help="histogram CSV (default stdout)")
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("synth", help="generate a planted-structure dataset")
    p.add_argument("--out", required=True, help="dataset directory (replaced)")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 42)")
    p.add_argument("--num-groups", type=int, default=None, help="lesion groups G0.. (2-4, default 3)")
    p.add_argument("--volumes-per-group", type=int, default=None, help="default 20")
    p.add_argument("--slices-per-volume", type=int, default=None, help="default 16")
    p.add_argument("--dim", type=int, default=None, help="embedding dimension (default 32)")
    p.add_argument("--separation", type=float, default=None, help="cluster separation (default 10)")
    p.add_argument("--sigma", type=float, default=None, help="noise sigma (default 0.1)")
    p.add_argument("--with-masks", action="store_true", help="also write lesion and organ masks")
    p.set_defaults(handler=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        configure(args.config, threads=args.threads, workdir=args.workdir)
        return int(args.handler(args))
    except (Mir3dError, OSError, PydanticValidationError) as e:
        logger.error("%s", e)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())

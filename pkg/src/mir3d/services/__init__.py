"""Services module."""

from .engine import RetrievalEngine
from .evaluation_service import run_experiment
from .index_service import IndexBuilder, VectorIndex, build_index, load_index, save_index
from .lesion_service import LesionPipeline
from .manifest_service import load_manifest, parse_manifest, save_manifest
from .synth_service import synth_generate

__all__ = [
    "IndexBuilder",
    "LesionPipeline",
    "RetrievalEngine",
    "VectorIndex",
    "build_index",
    "load_index",
    "load_manifest",
    "parse_manifest",
    "run_experiment",
    "save_index",
    "save_manifest",
    "synth_generate",
]

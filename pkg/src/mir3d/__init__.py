"""MIR3D - Content-based 3D medical image retrieval engine and benchmark harness."""

__version__ = "0.1.0"

"""Transformer hidden-state extraction into embedding-stream files."""

from .pipeline import ExtractionConfig, ExtractionError, ExtractionResult, extract
from .streamwriter import LayerStreamWriter, StreamWriteError, pack_header

__version__ = "0.1.0"

__all__ = [
    "ExtractionConfig",
    "ExtractionError",
    "ExtractionResult",
    "LayerStreamWriter",
    "StreamWriteError",
    "extract",
    "pack_header",
]

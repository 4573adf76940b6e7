"""Writer for the embedding-stream wire format.

The layout (all integers little-endian, vectors float32):

    header: magic "EMB1", version uint32 (=1), dim uint32, layer uint32,
            dtype uint8 (0 = float32), tag_len uint16, model_tag UTF-8
    record: token_id uint32, then dim float32 components

This is a producer-side implementation of the published contract, kept
independent of any consumer library so extraction has no analysis-side
dependencies.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"EMB1"
VERSION = 1
DTYPE_FLOAT32 = 0

_FIXED_HEADER = struct.Struct("<4sIIIBH")


class StreamWriteError(ValueError):
    pass


def pack_header(dim: int, layer: int, model_tag: str) -> bytes:
    if dim < 1:
        raise StreamWriteError(f"dim must be >= 1, got {dim}")
    if layer < 0:
        raise StreamWriteError(f"layer must be >= 0, got {layer}")
    tag = model_tag.encode("utf-8")
    if len(tag) > 0xFFFF:
        raise StreamWriteError("model_tag longer than 65535 bytes")
    return _FIXED_HEADER.pack(MAGIC, VERSION, dim, layer, DTYPE_FLOAT32, len(tag)) + tag


class LayerStreamWriter:
    """Append-only writer for one (model, layer) stream file."""

    def __init__(self, path, dim: int, layer: int, model_tag: str):
        self.path = path
        self.dim = dim
        self.layer = layer
        self.count = 0
        self._sink = open(path, "wb")
        self._sink.write(pack_header(dim, layer, model_tag))

    def write_block(self, token_ids: np.ndarray, vectors: np.ndarray) -> None:
        """Append one record per row of ``vectors`` (cast to float32)."""
        vectors = np.ascontiguousarray(vectors, dtype="<f4")
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise StreamWriteError(f"expected ({len(token_ids)}, {self.dim}) block, got {vectors.shape}")
        if len(token_ids) != vectors.shape[0]:
            raise StreamWriteError(f"{len(token_ids)} ids for {vectors.shape[0]} vectors")
        if not np.isfinite(vectors).all():
            bad = int(np.argmin(np.isfinite(vectors).all(axis=1)))
            raise StreamWriteError(f"non-finite component in block row {bad}")
        buf = bytearray()
        for token_id, row in zip(token_ids, vectors):
            buf += struct.pack("<I", int(token_id))
            buf += row.tobytes()
        self._sink.write(buf)
        self.count += vectors.shape[0]

    def close(self) -> None:
        if not self._sink.closed:
            self._sink.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()

"""Binary embedding-stream format and vocabulary sidecar.

A stream file is a header followed by zero or more fixed-size records.
All integers are little-endian, vectors are 32-bit IEEE floats:

    header:  magic      4 bytes, b"EMB1"
             version    uint32, must be 1
             dim        uint32, vector length, >= 1
             layer      uint32, layer index (input layer = 0)
             dtype      uint8, 0 = float32 (only value defined)
             tag_len    uint16, byte length of model_tag
             model_tag  tag_len bytes, UTF-8
    record:  token_id   uint32
             vector     dim * float32

Streams are written and read strictly sequentially, so they can be piped;
the reader never seeks and holds at most one record in memory.

The vocabulary sidecar is UTF-8 TSV, one line per token type:
``token_id <TAB> token <TAB> char_count``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator, NamedTuple

import numpy as np

from .errors import DataValidationError, StreamFormatError, TruncatedStreamError

MAGIC = b"EMB1"
VERSION = 1
DTYPE_FLOAT32 = 0

_FIXED_HEADER = struct.Struct("<4sIIIBH")


class EmbeddingRecord(NamedTuple):
    """One token occurrence: the token's id and its embedding vector."""

    token_id: int
    vector: np.ndarray


class VocabEntry(NamedTuple):
    token: str
    char_count: int


@dataclass(frozen=True)
class StreamHeader:
    """Stream metadata; ``dim`` is the vector length of every record."""

    dim: int
    layer: int = 0
    model_tag: str = ""
    version: int = VERSION
    dtype: int = DTYPE_FLOAT32

    def validate(self) -> None:
        if self.version != VERSION:
            raise StreamFormatError(f"unsupported version {self.version}, expected {VERSION}")
        if self.dim < 1:
            raise StreamFormatError(f"dim must be >= 1, got {self.dim}")
        if self.dtype != DTYPE_FLOAT32:
            raise StreamFormatError(f"unsupported dtype code {self.dtype}")
        if self.layer < 0:
            raise StreamFormatError(f"layer must be >= 0, got {self.layer}")

    @property
    def record_size(self) -> int:
        """On-disk size of one record in bytes."""
        return 4 + 4 * self.dim

    def pack(self) -> bytes:
        self.validate()
        tag = self.model_tag.encode("utf-8")
        if len(tag) > 0xFFFF:
            raise StreamFormatError("model_tag longer than 65535 bytes")
        return _FIXED_HEADER.pack(MAGIC, self.version, self.dim, self.layer, self.dtype, len(tag)) + tag


def write_stream(header: StreamHeader, records: Iterable, sink: BinaryIO) -> int:
    """Write ``header`` then ``records`` to ``sink``; returns the record count.

    Records are ``(token_id, vector)`` pairs (``EmbeddingRecord`` included).
    Vectors are cast to float32 for storage; a vector of the wrong length or
    with a non-finite component (after the cast) raises
    :class:`DataValidationError` carrying the record index.
    """
    sink.write(header.pack())
    count = 0
    for index, (token_id, vector) in enumerate(records):
        with np.errstate(over="ignore"):  # float32 overflow is caught as non-finite below
            vec = np.asarray(vector, dtype="<f4")
        if vec.ndim != 1 or vec.shape[0] != header.dim:
            raise DataValidationError(
                f"record {index}: vector length {vec.shape[0] if vec.ndim == 1 else vec.shape} "
                f"does not match stream dim {header.dim}",
                index=index,
            )
        finite = np.isfinite(vec)
        if not finite.all():
            component = int(np.argmin(finite))
            raise DataValidationError(
                f"record {index}: non-finite component at position {component}",
                index=index,
                component=component,
            )
        if not 0 <= int(token_id) <= 0xFFFFFFFF:
            raise DataValidationError(f"record {index}: token_id {token_id} out of uint32 range", index=index)
        sink.write(struct.pack("<I", int(token_id)))
        sink.write(vec.tobytes())
        count += 1
    return count


def _read_exact(source: BinaryIO, n: int, offset: int, what: str) -> bytes | None:
    """Read exactly ``n`` bytes; None on clean EOF, error on a partial unit."""
    buf = source.read(n)
    if not buf:
        return None
    while len(buf) < n:
        more = source.read(n - len(buf))
        if not more:
            raise TruncatedStreamError(f"stream ends inside {what}", offset=offset)
        buf += more
    return buf


def read_header(source: BinaryIO) -> StreamHeader:
    """Consume and validate the header at the current position of ``source``."""
    fixed = _read_exact(source, _FIXED_HEADER.size, 0, "header")
    if fixed is None:
        raise TruncatedStreamError("empty stream", offset=0)
    magic, version, dim, layer, dtype, tag_len = _FIXED_HEADER.unpack(fixed)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    tag = b""
    if tag_len:
        got = _read_exact(source, tag_len, _FIXED_HEADER.size, "header model_tag")
        if got is None:
            raise TruncatedStreamError("stream ends inside header model_tag", offset=_FIXED_HEADER.size)
        tag = got
    header = StreamHeader(dim=dim, layer=layer, model_tag=tag.decode("utf-8"), version=version, dtype=dtype)
    header.validate()
    return header


def read_stream(source: BinaryIO) -> tuple[StreamHeader, Iterator[EmbeddingRecord]]:
    """Parse the header, then lazily yield records in file order.

    The iterator is single-pass and keeps only the current record in memory.
    A stream cut mid-record raises :class:`TruncatedStreamError` with the
    byte offset at which the incomplete record started; a record containing
    NaN or Inf raises :class:`DataValidationError` with its index.
    """
    header = read_header(source)
    header_size = _FIXED_HEADER.size + len(header.model_tag.encode("utf-8"))

    def records() -> Iterator[EmbeddingRecord]:
        rec_size = header.record_size
        offset = header_size
        index = 0
        while True:
            raw = _read_exact(source, rec_size, offset, f"record {index}")
            if raw is None:
                return
            (token_id,) = struct.unpack_from("<I", raw)
            vector = np.frombuffer(raw, dtype="<f4", offset=4).copy()
            finite = np.isfinite(vector)
            if not finite.all():
                component = int(np.argmin(finite))
                raise DataValidationError(
                    f"record {index}: non-finite component at position {component}",
                    index=index,
                    component=component,
                )
            yield EmbeddingRecord(token_id, vector)
            offset += rec_size
            index += 1

    return header, records()


def write_vocab(entries: Iterable, sink) -> int:
    """Write vocabulary lines ``token_id <TAB> token <TAB> char_count``.

    Entries are ``(token_id, token)`` or ``(token_id, token, char_count)``;
    when omitted, char_count defaults to ``len(token)``. Returns the line
    count. Duplicate ids and tokens containing tab or newline are rejected.
    """
    seen: set[int] = set()
    count = 0
    for entry in entries:
        token_id, token = entry[0], entry[1]
        char_count = entry[2] if len(entry) > 2 else len(token)
        if token_id in seen:
            raise DataValidationError(f"duplicate token_id {token_id} in vocabulary")
        if "\t" in token or "\n" in token or "\r" in token:
            raise DataValidationError(f"token_id {token_id}: token contains tab or newline")
        seen.add(token_id)
        sink.write(f"{token_id}\t{token}\t{char_count}\n")
        count += 1
    return count


def read_vocab(source) -> dict[int, VocabEntry]:
    """Parse a vocabulary sidecar into ``{token_id: (token, char_count)}``."""
    vocab: dict[int, VocabEntry] = {}
    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise StreamFormatError(f"vocab line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
        try:
            token_id = int(parts[0])
            char_count = int(parts[2])
        except ValueError as exc:
            raise StreamFormatError(f"vocab line {lineno}: {exc}") from exc
        if token_id in vocab:
            raise DataValidationError(f"vocab line {lineno}: duplicate token_id {token_id}")
        vocab[token_id] = VocabEntry(parts[1], char_count)
    return vocab

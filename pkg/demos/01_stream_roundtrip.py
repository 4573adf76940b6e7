# Write an embedding stream plus its vocabulary sidecar, read both back,
# and show what the reader does with a damaged file.

import io

import numpy as np

from embstats import StreamHeader, TruncatedStreamError, read_stream, read_vocab, write_stream, write_vocab

rng = np.random.default_rng(0)

# A stream is a header (dimension, layer, free-form model tag) followed by
# fixed-size records: token id + one float32 vector per token occurrence.
header = StreamHeader(dim=4, layer=6, model_tag="demo-encoder")
records = [(tid, rng.standard_normal(4).astype(np.float32)) for tid in [3, 1, 3, 2, 3]]

buf = io.BytesIO()
count = write_stream(header, records, buf)
print(f"wrote {count} records, {buf.tell()} bytes")

buf.seek(0)
got_header, got_records = read_stream(buf)
print(f"header round-trips: {got_header == header}")
for record in got_records:
    print(f"  token {record.token_id}: {np.round(record.vector, 3)}")

# The sidecar maps token ids to strings and character counts.
sidecar = io.StringIO()
write_vocab([(1, "once"), (2, "winked"), (3, "the")], sidecar)
sidecar.seek(0)
print("vocab:", dict(read_vocab(sidecar)))

# Cutting the file mid-record is detected, with the offset of the bad record.
damaged = io.BytesIO(buf.getvalue()[:-5])
_, records = read_stream(damaged)
try:
    list(records)
except TruncatedStreamError as err:
    print(f"truncation detected at byte offset {err.offset}")

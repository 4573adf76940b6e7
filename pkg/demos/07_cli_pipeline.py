# The whole pipeline through the command line: simulate a stream, compute
# per-token statistics, build the layer report, and project a token sample
# to 2-D.  Every step drops a manifest.json recording how it was produced.

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from embstats import StreamHeader, read_stream, write_stream, write_vocab

work = Path(tempfile.mkdtemp(prefix="embstats-demo-"))
print(f"working in {work}\n")


def run(*argv):
    print("$ embstats", " ".join(map(str, argv)))
    subprocess.run([sys.executable, "-m", "embstats.cli", *map(str, argv)], check=True)


# 1. A synthetic stream standing in for a real extractor dump.
rng = np.random.default_rng(5)
records = []
entries = []
for tid, n_t in enumerate(np.unique(np.logspace(1, 3, 40).astype(int))):
    entries.append((tid, f"tok{tid:02d}"))
    center = rng.standard_normal(8) * 3
    block = center + rng.normal(0, 1, size=(int(n_t), 8))
    records.extend((tid, row.astype(np.float32)) for row in block)
with open(work / "layer_6.emb", "wb") as sink:
    count = write_stream(StreamHeader(dim=8, layer=6, model_tag="demo"), records, sink)
with open(work / "vocab.tsv", "w") as sink:
    write_vocab(entries, sink)
print(f"synthetic stream: {count} records\n")

# 2. Accumulate, keeping mean vectors for the decomposition.
run("accumulate", "--input", work / "layer_6.emb", "--vocab", work / "vocab.tsv",
    "--out", work / "acc", "--retain-mu", "--threads", 4)

# 3. Layer report plus per-figure CSVs.
run("report", "--stats", work / "acc" / "stats.tsv", "--mu", work / "acc" / "mu.bin",
    "--layers", 6, "--out", work / "report")

# 4. Frequency-stratified sample projected to 2-D.
run("sample-pca", "--stats", work / "acc" / "stats.tsv", "--vocab", work / "vocab.tsv",
    "--stream", work / "layer_6.emb", "--seed", 1, "--out", work / "pca")

# 5. Layer-normalization scaling study, with the streams it generated.
run("simulate-ln", "--d", 16, "--n0-grid", "100,400", "--tokens", 50,
    "--seed", 2, "--emit-streams", "--out", work / "lnstudy")

print("\nreport row:")
row = json.loads((work / "report" / "report.json").read_text())["rows"][0]
print("  " + ", ".join(f"{k}={v if not isinstance(v, float) else round(v, 4)}" for k, v in row.items()))

print("\nemitted study stream validates against the reader:")
with open(work / "lnstudy" / "ln_n0_100.emb", "rb") as f:
    header, stream_records = read_stream(f)
    print(f"  dim={header.dim} tag={header.model_tag} records={sum(1 for _ in stream_records)}")

print("\nmanifest of the accumulate step:")
manifest = json.loads((work / "acc" / "manifest.json").read_text())
print(f"  command={manifest['command']} version={manifest['version']} duration={manifest['duration_s']}s")
print(f"\nall outputs under {work}")

"""Hidden-state extraction: corpus filtering, batched inference, per-layer
stream emission.

Each retained sentence contributes one record per token occurrence per
requested layer, special tokens included (they carry their real ids and can
be dropped at analysis time).  Token identity is the tokenizer's id; no
extra normalization.  Layer 0 is the embedding layer's output, layer k the
output of encoder block k.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from .streamwriter import LayerStreamWriter


class ExtractionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExtractionConfig:
    """Run settings; ``fraction`` subsamples sentences before the word
    filter, deterministically under ``seed``."""

    model: str
    corpus: str
    layers: tuple[int, ...]
    out_dir: str
    max_words: int = 64
    fraction: float = 1.0
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.layers:
            raise ExtractionError("at least one layer index is required")
        if not 0.0 < self.fraction <= 1.0:
            raise ExtractionError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.max_words < 1:
            raise ExtractionError(f"max_words must be >= 1, got {self.max_words}")
        if self.batch_size < 1:
            raise ExtractionError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class ExtractionResult:
    out_dir: Path
    stream_paths: dict[int, Path]
    vocab_path: Path
    manifest_path: Path
    dim: int
    records_per_layer: int
    sentences_total: int
    sentences_sampled: int
    sentences_kept: int
    skipped_too_long: int


def _batched(items, size):
    for start in range(0, len(items), size):
        yield items[start : start + size]


def extract(config: ExtractionConfig) -> ExtractionResult:
    """Run the extraction; writes layer_<k>.emb files, vocab.tsv and
    manifest.json into the output directory and returns the counts."""
    from transformers import AutoModel, AutoTokenizer

    started = time.monotonic()
    tokenizer = AutoTokenizer.from_pretrained(config.model)
    model = AutoModel.from_pretrained(config.model)
    model.eval()

    n_layers = int(model.config.num_hidden_layers)
    dim = int(model.config.hidden_size)
    bad_layers = [k for k in config.layers if not 0 <= k <= n_layers]
    if bad_layers:
        raise ExtractionError(
            f"layer indices {bad_layers} outside [0, {n_layers}] (input layer = 0)"
        )
    if len(tokenizer) > int(model.config.vocab_size):
        raise ExtractionError(
            f"tokenizer/model mismatch: tokenizer has {len(tokenizer)} ids, "
            f"model embeds only {model.config.vocab_size}"
        )
    max_positions = int(getattr(model.config, "max_position_embeddings", 10**9))

    corpus_path = Path(config.corpus)
    lines = [line.strip() for line in corpus_path.read_text(encoding="utf-8").splitlines()]
    lines = [line for line in lines if line]
    sentences_total = len(lines)

    rng = np.random.default_rng(config.seed)
    keep_mask = rng.random(sentences_total) < config.fraction
    sampled = [line for line, keep in zip(lines, keep_mask) if keep]
    # word filter before tokenization; "word" = whitespace-separated chunk
    kept = [line for line in sampled if len(line.split()) < config.max_words]

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writers = {
        k: LayerStreamWriter(out_dir / f"layer_{k}.emb", dim=dim, layer=k, model_tag=str(config.model))
        for k in sorted(set(config.layers))
    }
    seen_ids: set[int] = set()
    skipped_too_long = 0
    sentences_used = 0

    try:
        with torch.no_grad():
            for batch in _batched(kept, config.batch_size):
                encoded = tokenizer(batch, add_special_tokens=True)["input_ids"]
                rows = [ids for ids in encoded if len(ids) <= max_positions]
                skipped_too_long += len(encoded) - len(rows)
                if not rows:
                    continue
                sentences_used += len(rows)
                padded = tokenizer.pad({"input_ids": rows}, return_tensors="pt")
                output = model(**padded, output_hidden_states=True)
                lengths = padded["attention_mask"].sum(dim=1).tolist()
                for k, writer in writers.items():
                    states = output.hidden_states[k]
                    for b, length in enumerate(lengths):
                        ids = rows[b]
                        writer.write_block(
                            np.asarray(ids, dtype=np.uint32),
                            states[b, : int(length)].numpy(),
                        )
                for ids in rows:
                    seen_ids.update(int(i) for i in ids)
    finally:
        for writer in writers.values():
            writer.close()

    counts = {k: w.count for k, w in writers.items()}
    if len(set(counts.values())) > 1:
        raise ExtractionError(f"per-layer record counts diverged: {counts}")

    vocab_path = out_dir / "vocab.tsv"
    with open(vocab_path, "w", encoding="utf-8") as sink:
        for token_id in sorted(seen_ids):
            token = tokenizer.convert_ids_to_tokens(token_id)
            token = "" if token is None else str(token).replace("\t", " ").replace("\n", " ")
            sink.write(f"{token_id}\t{token}\t{len(token)}\n")

    manifest_path = out_dir / "manifest.json"
    manifest = {
        "tool": "embextract",
        "command": "extract",
        "parameters": {
            "model": str(config.model),
            "corpus": str(config.corpus),
            "layers": sorted(set(config.layers)),
            "max_words": config.max_words,
            "fraction": config.fraction,
            "batch_size": config.batch_size,
            "seed": config.seed,
            "out_dir": str(out_dir),
        },
        "seed": config.seed,
        "inputs": {str(corpus_path): hashlib.sha256(corpus_path.read_bytes()).hexdigest()},
        "model_info": {"hidden_size": dim, "num_hidden_layers": n_layers, "max_positions": max_positions},
        "counts": {
            "sentences_total": sentences_total,
            "sentences_sampled": len(sampled),
            "sentences_kept_by_word_filter": len(kept),
            "sentences_embedded": sentences_used,
            "skipped_too_long": skipped_too_long,
            "records_per_layer": next(iter(counts.values())) if counts else 0,
            "distinct_token_ids": len(seen_ids),
        },
        "rules": {
            "word_definition": "whitespace-separated chunks; sentences with fewer than max_words are kept",
            "special_tokens": "emitted with their real tokenizer ids; exclude at analysis time if needed",
            "token_identity": "tokenizer ids verbatim, no case folding or subword normalization",
        },
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "duration_s": round(time.monotonic() - started, 3),
    }
    with open(manifest_path, "w", encoding="utf-8") as sink:
        json.dump(manifest, sink, indent=2, sort_keys=True)
        sink.write("\n")

    return ExtractionResult(
        out_dir=out_dir,
        stream_paths={k: Path(w.path) for k, w in writers.items()},
        vocab_path=vocab_path,
        manifest_path=manifest_path,
        dim=dim,
        records_per_layer=next(iter(counts.values())) if counts else 0,
        sentences_total=sentences_total,
        sentences_sampled=len(sampled),
        sentences_kept=len(kept),
        skipped_too_long=skipped_too_long,
    )

"""``embextract`` command line: one subcommand-free entry that runs an
extraction and prints the resulting counts."""

from __future__ import annotations

import argparse
import json
import sys

from .pipeline import ExtractionConfig, ExtractionError, extract
from .streamwriter import StreamWriteError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embextract",
        description="Dump per-occurrence, per-layer hidden states into embedding-stream files.",
    )
    parser.add_argument("--model", required=True, help="model name or local directory")
    parser.add_argument("--corpus", required=True, help="plain text, one sentence per line")
    parser.add_argument("--layers", required=True, help="comma-separated layer indices, input layer = 0")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--max-words", type=int, default=64, help="keep sentences with fewer words than this")
    parser.add_argument("--fraction", type=float, default=1.0, help="sentence sampling fraction in (0, 1]")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        layers = tuple(int(part) for part in args.layers.split(",") if part)
    except ValueError:
        print(json.dumps({"error": "ExtractionError", "message": f"bad --layers {args.layers!r}"}), file=sys.stderr)
        return 1
    try:
        config = ExtractionConfig(
            model=args.model,
            corpus=args.corpus,
            layers=layers,
            out_dir=args.out,
            max_words=args.max_words,
            fraction=args.fraction,
            batch_size=args.batch_size,
            seed=args.seed,
        )
        result = extract(config)
    except (ExtractionError, StreamWriteError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(
        f"extracted {result.records_per_layer} records per layer "
        f"({result.sentences_kept} sentences kept, {result.skipped_too_long} over the context limit) "
        f"into {result.out_dir}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())

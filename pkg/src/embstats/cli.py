"""``embstats`` command line: accumulate, report, sample-pca, simulate-ln.

Every command writes its data files plus one ``manifest.json`` recording
the resolved parameters, input digests, seed, tool version and duration.
Given identical inputs and seed, re-running a command reproduces the data
files byte for byte (only manifest timestamps differ).  On a defined error
the command prints a single JSON line to stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from contextlib import ExitStack
from datetime import datetime, timezone
from itertools import chain, islice
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    fixed_width_histogram,
    freq_regressions,
    frequency_filter,
    layer_report,
    pca_project,
    sample_tokens,
)
from .errors import DataValidationError, DegenerateDataError, EmbStatsError, EmptyInputError
from .lnsim import cv_scaling_study, generate_ln_stream, study_config
from .moments import (
    TokenAccumulator,
    accumulate_stream,
    aggregate_global,
    attach_means,
    finalize_all,
    read_stats_tsv,
    write_mean_matrix,
    write_stats_tsv,
)
from .streamfmt import read_stream, read_vocab, write_stream

CHUNK_RECORDS = 8192


def _fmt(value) -> str:
    """Cell formatting: repr for floats (exact round-trip), '' for None."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, params: dict, inputs, started: float) -> None:
    manifest = {
        "tool": "embstats",
        "version": __version__,
        "command": command,
        "parameters": params,
        "seed": params.get("seed"),
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "duration_s": round(time.monotonic() - started, 3),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _chunks(iterator, size: int):
    iterator = iter(iterator)
    while True:
        block = list(islice(iterator, size))
        if not block:
            return
        yield block


def _merge_into(target: dict[int, TokenAccumulator], part: dict[int, TokenAccumulator]) -> None:
    for token_id, acc in part.items():
        prev = target.get(token_id)
        target[token_id] = acc if prev is None else prev.merge(acc)


def _accumulate_paths(paths, threads: int):
    """Accumulate one or more stream files into a single token map.

    Inputs must agree on dimension and layer.  With threads > 1 the record
    stream is cut into contiguous chunks whose partial maps are merged in
    chunk order, so the result does not depend on scheduling.
    """
    with ExitStack() as stack:
        headers = []
        iterators = []
        for path in paths:
            f = stack.enter_context(open(path, "rb"))
            header, records = read_stream(f)
            headers.append((path, header))
            iterators.append(records)
        first_path, first = headers[0]
        for path, header in headers[1:]:
            if header.dim != first.dim or header.layer != first.layer:
                raise DataValidationError(
                    f"input {path} has (dim={header.dim}, layer={header.layer}) but "
                    f"{first_path} has (dim={first.dim}, layer={first.layer})"
                )
        records = chain.from_iterable(iterators)
        if threads <= 1:
            return first, accumulate_stream(records)
        merged: dict[int, TokenAccumulator] = {}
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pending = deque()
            for block in _chunks(records, CHUNK_RECORDS):
                pending.append(pool.submit(accumulate_stream, block))
                if len(pending) >= 2 * threads:
                    _merge_into(merged, pending.popleft().result())
            while pending:
                _merge_into(merged, pending.popleft().result())
        return first, merged


def cmd_accumulate(args) -> None:
    started = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab = None
    if args.vocab:
        with open(args.vocab, "r", encoding="utf-8") as f:
            vocab = read_vocab(f)
    header, merged = _accumulate_paths(args.input, args.threads)
    stats = finalize_all(merged, keep_mean=args.retain_mu)
    with open(out / "stats.tsv", "w", encoding="utf-8", newline="\n") as f:
        write_stats_tsv(stats, f, vocab)
    if args.retain_mu:
        with open(out / "mu.bin", "wb") as f:
            write_mean_matrix(stats, f)
    params = {
        "input": [str(p) for p in args.input],
        "vocab": str(args.vocab) if args.vocab else None,
        "out": str(out),
        "retain_mu": bool(args.retain_mu),
        "threads": args.threads,
        "dim": header.dim,
        "layer": header.layer,
        "model_tag": header.model_tag,
    }
    inputs = list(args.input) + ([args.vocab] if args.vocab else [])
    _write_manifest(out, "accumulate", params, inputs, started)


def _load_layer(stats_path, mu_path):
    with open(stats_path, "r", encoding="utf-8") as f:
        stats = read_stats_tsv(f)
    raw = Path(mu_path).read_bytes()
    if not stats:
        if raw:
            raise DataValidationError(f"{mu_path} is non-empty but {stats_path} has no rows")
        return []
    if len(raw) % (8 * len(stats)) != 0:
        raise DataValidationError(
            f"{mu_path}: size {len(raw)} is not a whole number of float64 rows for {len(stats)} tokens"
        )
    dim = len(raw) // (8 * len(stats))
    means = np.frombuffer(raw, dtype="<f8").reshape(len(stats), dim)
    return attach_means(stats, means)


def cmd_report(args) -> None:
    started = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if len(args.mu) != len(args.stats):
        raise DataValidationError(
            f"global decomposition needs one --mu per --stats file ({len(args.stats)} stats, {len(args.mu)} mu)"
        )
    layers = args.layers if args.layers is not None else list(range(len(args.stats)))
    if len(layers) != len(args.stats):
        raise DataValidationError(f"{len(layers)} layer indices for {len(args.stats)} stats files")

    triples = []
    per_layer_filtered = {}
    for layer, stats_path, mu_path in zip(layers, args.stats, args.mu):
        attached = _load_layer(stats_path, mu_path)
        filtered = frequency_filter(attached, args.lo, args.hi)
        glob = aggregate_global(filtered) if filtered else None
        triples.append((layer, filtered, glob))
        per_layer_filtered[layer] = filtered
    rows = layer_report(triples)

    report_columns = (
        "layer",
        "n_tokens",
        "Q",
        "M",
        "V",
        "V_W",
        "V_B",
        "M_over_Q",
        "Vw_over_Q",
        "Vb_over_Q",
        "Vw_over_V",
        "cv_Q",
        "mv_slope",
        "mv_r2",
    )
    with open(out / "report.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write("\t".join(report_columns) + "\n")
        for row in rows:
            f.write(
                "\t".join(
                    _fmt(v)
                    for v in (
                        row.layer,
                        row.n_tokens,
                        row.mean_sq_norm,
                        row.sq_norm_of_mean,
                        row.total_var,
                        row.within_var,
                        row.between_var,
                        row.ratio_mean,
                        row.ratio_within,
                        row.ratio_between,
                        row.within_share,
                        row.cv_q,
                        row.mv_slope,
                        row.mv_r2,
                    )
                )
                + "\n"
            )
    report_json = {
        "metadata": {
            "tool": "embstats",
            "version": __version__,
            "frequency_filter_log10": [args.lo, args.hi],
            "cv_q_computed_on": "frequency-filtered tokens",
        },
        "rows": [
            {
                "layer": row.layer,
                "n_tokens": row.n_tokens,
                "Q": row.mean_sq_norm,
                "M": row.sq_norm_of_mean,
                "V": row.total_var,
                "V_W": row.within_var,
                "V_B": row.between_var,
                "M_over_Q": row.ratio_mean,
                "Vw_over_Q": row.ratio_within,
                "Vb_over_Q": row.ratio_between,
                "Vw_over_V": row.within_share,
                "cv_Q": row.cv_q,
                "mv_slope": row.mv_slope,
                "mv_r2": row.mv_r2,
            }
            for row in rows
        ],
    }
    with open(out / "report.json", "w", encoding="utf-8") as f:
        json.dump(report_json, f, indent=2)
        f.write("\n")

    # One CSV per figure panel, consumable by any plotting tool.
    with open(out / "cv_slope_r2.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("layer,cv_Q,mv_slope,mv_r2\n")
        for row in rows:
            f.write(f"{row.layer},{_fmt(row.cv_q)},{_fmt(row.mv_slope)},{_fmt(row.mv_r2)}\n")
    with open(out / "ratios.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("layer,M_over_Q,Vw_over_Q,Vb_over_Q,Vw_over_V\n")
        for row in rows:
            f.write(
                f"{row.layer},{_fmt(row.ratio_mean)},{_fmt(row.ratio_within)},"
                f"{_fmt(row.ratio_between)},{_fmt(row.within_share)}\n"
            )
    with open(out / "freq_regressions.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write("layer\tmode\tstat\tslope\tintercept\tr2\tn_points\n")
        for layer in layers:
            filtered = per_layer_filtered[layer]
            for mode, log_values in (("log10_1p", True), ("raw", False)):
                try:
                    fits = freq_regressions(filtered, log_values=log_values)
                except (DegenerateDataError, EmptyInputError):
                    continue
                for stat in ("Q", "M", "V"):
                    fit = fits[stat]
                    f.write(
                        f"{layer}\t{mode}\t{stat}\t{fit.slope!r}\t{fit.intercept!r}\t"
                        f"{fit.r2!r}\t{fit.n_points}\n"
                    )
    for layer in layers:
        filtered = per_layer_filtered[layer]
        with open(out / f"mv_scatter_layer{layer}.csv", "w", encoding="utf-8", newline="\n") as f:
            f.write("token_id,n_t,M,V\n")
            for s in filtered:
                f.write(f"{s.token_id},{s.count},{s.sq_norm_of_mean!r},{s.total_var!r}\n")
        with open(out / f"freq_scatter_layer{layer}.csv", "w", encoding="utf-8", newline="\n") as f:
            f.write("token_id,n_t,log10_n,Q,M,V\n")
            for s in filtered:
                f.write(
                    f"{s.token_id},{s.count},{np.log10(s.count)!r},{s.mean_sq_norm!r},"
                    f"{s.sq_norm_of_mean!r},{s.total_var!r}\n"
                )
        if not filtered:
            continue
        values = {
            "Q": [s.mean_sq_norm for s in filtered],
            "M": [s.sq_norm_of_mean for s in filtered],
            "V": [s.total_var for s in filtered],
        }
        for stat, vals in values.items():
            edges, counts = fixed_width_histogram(vals, bins=args.hist_bins)
            with open(out / f"hist_layer{layer}_{stat}.csv", "w", encoding="utf-8", newline="\n") as f:
                f.write("bin_lo,bin_hi,count\n")
                for lo_edge, hi_edge, count in zip(edges[:-1], edges[1:], counts):
                    f.write(f"{float(lo_edge)!r},{float(hi_edge)!r},{int(count)}\n")

    params = {
        "stats": [str(p) for p in args.stats],
        "mu": [str(p) for p in args.mu],
        "layers": list(layers),
        "lo": args.lo,
        "hi": args.hi,
        "hist_bins": args.hist_bins,
        "out": str(out),
    }
    _write_manifest(out, "report", params, list(args.stats) + list(args.mu), started)


def cmd_sample_pca(args) -> None:
    started = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(args.stats, "r", encoding="utf-8") as f:
        stats = read_stats_tsv(f)
    with open(args.vocab, "r", encoding="utf-8") as f:
        vocab = read_vocab(f)
    chosen = sample_tokens(
        stats, vocab, seed=args.seed, lo_log10=args.lo, hi_log10=args.hi, min_chars=args.min_chars
    )
    wanted = set(chosen)
    by_id = {s.token_id: s for s in stats}

    vectors = []
    row_tokens = []
    with open(args.stream, "rb") as f:
        _header, records = read_stream(f)
        for record in records:
            if record.token_id in wanted:
                vectors.append(record.vector)
                row_tokens.append(record.token_id)
    seen = set(row_tokens)
    missing = sorted(wanted - seen)
    if missing:
        raise DataValidationError(f"sampled token ids absent from stream: {missing}")

    projection = pca_project(np.asarray(vectors))
    with open(out / "points.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["token", "x", "y", "n_t", "Q", "M", "V"])
        for token_id, (x, y) in zip(row_tokens, projection.points):
            s = by_id[token_id]
            writer.writerow(
                [
                    vocab[token_id].token,
                    repr(float(x)),
                    repr(float(y)),
                    s.count,
                    repr(s.mean_sq_norm),
                    repr(s.sq_norm_of_mean),
                    repr(s.total_var),
                ]
            )
        writer.writerow(["<origin>", "0.0", "0.0", "", "", "", ""])
    with open(out / "tokens.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write("token_id\ttoken\tn_t\n")
        for token_id in chosen:
            f.write(f"{token_id}\t{vocab[token_id].token}\t{by_id[token_id].count}\n")
    with open(out / "pca.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "explained_variance": [float(v) for v in projection.explained_variance],
                "n_points": int(projection.points.shape[0]),
                "n_tokens": len(chosen),
            },
            f,
            indent=2,
        )
        f.write("\n")
    params = {
        "stats": str(args.stats),
        "vocab": str(args.vocab),
        "stream": str(args.stream),
        "seed": args.seed,
        "lo": args.lo,
        "hi": args.hi,
        "min_chars": args.min_chars,
        "out": str(out),
    }
    _write_manifest(out, "sample-pca", params, [args.stats, args.vocab, args.stream], started)


def _load_affine_vector(path, preset: str, d: int, what: str) -> np.ndarray:
    if path:
        values = [float(line) for line in Path(path).read_text().split()]
        if len(values) != d:
            raise DataValidationError(f"{what} file {path} has {len(values)} values, expected {d}")
        return np.asarray(values, dtype=np.float64)
    if preset == "ones":
        return np.ones(d)
    if preset == "zeros":
        return np.zeros(d)
    raise DataValidationError(f"unknown {what} preset {preset!r}; choose ones or zeros")


def cmd_simulate_ln(args) -> None:
    started = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gamma = _load_affine_vector(args.gamma_file, args.gamma_preset, args.d, "gamma")
    beta = _load_affine_vector(args.beta_file, args.beta_preset, args.d, "beta")
    try:
        grid = [int(part) for part in args.n0_grid.split(",") if part]
    except ValueError as exc:
        raise DataValidationError(f"bad --n0-grid {args.n0_grid!r}: {exc}") from exc
    result = cv_scaling_study(
        gamma, beta, grid, args.tokens, seed=args.seed, base_distribution=args.distribution
    )
    with open(out / "study.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write("n0\tcv_Q\tmean_Q\n")
        for row in result.rows:
            f.write(f"{row.n0}\t{row.cv_q!r}\t{row.mean_q!r}\n")
    with open(out / "study.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "rows": [{"n0": r.n0, "cv_Q": r.cv_q, "mean_Q": r.mean_q} for r in result.rows],
                "loglog_slope": result.loglog_slope,
                "mean_Q": result.mean_q,
                "gamma_sq_norm": float(gamma @ gamma),
                "beta_sq_norm": float(beta @ beta),
            },
            f,
            indent=2,
        )
        f.write("\n")
    if args.emit_streams:
        for grid_index, n0 in enumerate(grid):
            config = study_config(gamma, beta, n0, args.tokens, args.seed, grid_index, args.distribution)
            header, records = generate_ln_stream(config)
            with open(out / f"ln_n0_{n0}.emb", "wb") as f:
                write_stream(header, records, f)
    params = {
        "d": args.d,
        "gamma_file": str(args.gamma_file) if args.gamma_file else None,
        "beta_file": str(args.beta_file) if args.beta_file else None,
        "gamma_preset": args.gamma_preset,
        "beta_preset": args.beta_preset,
        "n0_grid": grid,
        "tokens": args.tokens,
        "distribution": args.distribution,
        "seed": args.seed,
        "emit_streams": bool(args.emit_streams),
        "out": str(out),
    }
    inputs = [p for p in (args.gamma_file, args.beta_file) if p]
    _write_manifest(out, "simulate-ln", params, inputs, started)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embstats",
        description="One-pass moment statistics and analyses for embedding streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    acc = sub.add_parser("accumulate", help="per-token stats from stream files")
    acc.add_argument("--input", nargs="+", required=True, help="stream file(s), same dim and layer")
    acc.add_argument("--vocab", default=None, help="vocabulary sidecar TSV")
    acc.add_argument("--out", required=True, help="output directory")
    acc.add_argument("--retain-mu", action="store_true", help="also write the mean-vector matrix")
    acc.add_argument("--threads", type=int, default=1, help="partition/merge worker threads")
    acc.set_defaults(func=cmd_accumulate)

    rep = sub.add_parser("report", help="layer report and figure CSVs from stats files")
    rep.add_argument("--stats", nargs="+", required=True, help="stats.tsv files, one per layer")
    rep.add_argument("--mu", nargs="+", required=True, help="mu.bin files matching --stats")
    rep.add_argument("--layers", nargs="+", type=int, default=None, help="layer indices (default 0,1,...)")
    rep.add_argument("--lo", type=float, default=1.0, help="lower log10 frequency bound")
    rep.add_argument("--hi", type=float, default=5.0, help="upper log10 frequency bound")
    rep.add_argument("--hist-bins", type=int, default=50, help="histogram bin count")
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=cmd_report)

    spc = sub.add_parser("sample-pca", help="frequency-stratified token sample and 2-D projection")
    spc.add_argument("--stats", required=True)
    spc.add_argument("--vocab", required=True)
    spc.add_argument("--stream", required=True, help="stream file for the second pass")
    spc.add_argument("--seed", type=int, default=0)
    spc.add_argument("--lo", type=float, default=1.0)
    spc.add_argument("--hi", type=float, default=5.0)
    spc.add_argument("--min-chars", type=int, default=3)
    spc.add_argument("--out", required=True)
    spc.set_defaults(func=cmd_sample_pca)

    sim = sub.add_parser("simulate-ln", help="layer-normalization model scaling study")
    sim.add_argument("--d", type=int, required=True, help="vector dimension")
    sim.add_argument("--gamma-file", default=None, help="text file, one scale value per line")
    sim.add_argument("--beta-file", default=None, help="text file, one shift value per line")
    sim.add_argument("--gamma-preset", default="ones", help="ones or zeros (ignored with --gamma-file)")
    sim.add_argument("--beta-preset", default="zeros", help="ones or zeros (ignored with --beta-file)")
    sim.add_argument("--n0-grid", default="100,400,1600,6400", help="comma-separated minimum frequencies")
    sim.add_argument("--tokens", type=int, default=200, help="tokens per grid point")
    sim.add_argument("--distribution", choices=["normal", "uniform"], default="normal")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--emit-streams", action="store_true", help="also write one stream file per grid point")
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate_ln)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (EmbStatsError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

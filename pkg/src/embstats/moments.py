"""One-pass moment statistics for token embedding sets.

For a set of vectors the three tracked quantities are the mean squared norm
(``mean_sq_norm``), the squared norm of the mean vector (``sq_norm_of_mean``)
and the total variance, i.e. the per-component population variances summed
over components.  They satisfy

    mean_sq_norm = sq_norm_of_mean + total_var

exactly, which is the classic variance identity applied component-wise and
summed.  The accumulator below maintains the running mean vector and running
mean squared norm in the convex-combination form

    u' = (k / (k+1)) * u + (1 / (k+1)) * x
    q' = (k / (k+1)) * q + (1 / (k+1)) * ||x||^2

so a single pass over the stream suffices and partial states from disjoint
stream partitions merge by count-weighted averaging.  All accumulation is in
float64 regardless of the input dtype; variances use divisor n (population),
never n-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataValidationError, EmptyInputError

# A finalized variance may come out as a tiny negative number through
# cancellation; anything worse than this (relative to q) is a real error.
NEG_VAR_REL_TOL = 1e-9


def _as_float64(x, what: str = "vector") -> np.ndarray:
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1:
        raise DataValidationError(f"{what} must be 1-D, got shape {vec.shape}")
    if not np.isfinite(vec).all():
        component = int(np.argmin(np.isfinite(vec)))
        raise DataValidationError(f"{what} has a non-finite component at position {component}", component=component)
    return vec


@dataclass(frozen=True)
class TokenAccumulator:
    """Running one-pass state for a single token: occurrence count, mean
    vector and mean squared norm.  Instances are immutable values; ``update``
    and ``merge`` return new accumulators, which makes partitioned/parallel
    accumulation safe by construction."""

    count: int
    mean: np.ndarray
    mean_sq_norm: float

    @classmethod
    def init(cls, x) -> "TokenAccumulator":
        """State after the first occurrence ``x``."""
        vec = _as_float64(x).copy()
        vec.setflags(write=False)
        return cls(count=1, mean=vec, mean_sq_norm=float(vec @ vec))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def update(self, x) -> "TokenAccumulator":
        """Fold one more occurrence into the state (returns a new value)."""
        vec = _as_float64(x)
        if vec.shape[0] != self.dim:
            raise DataValidationError(f"vector length {vec.shape[0]} does not match accumulator dim {self.dim}")
        k = self.count
        keep = k / (k + 1)
        take = 1.0 / (k + 1)
        mean = self.mean * keep + vec * take
        mean.setflags(write=False)
        q = self.mean_sq_norm * keep + float(vec @ vec) * take
        return TokenAccumulator(count=k + 1, mean=mean, mean_sq_norm=q)

    def merge(self, other: "TokenAccumulator") -> "TokenAccumulator":
        """Combine two partial states by count-weighted averaging."""
        if other.dim != self.dim:
            raise DataValidationError(f"cannot merge accumulators of dim {self.dim} and {other.dim}")
        total = self.count + other.count
        wa = self.count / total
        wb = other.count / total
        mean = self.mean * wa + other.mean * wb
        mean.setflags(write=False)
        q = self.mean_sq_norm * wa + other.mean_sq_norm * wb
        return TokenAccumulator(count=total, mean=mean, mean_sq_norm=q)

    def finalize(self, token_id: int, keep_mean: bool = False) -> "TokenStats":
        """Close the running state into (count, Q, M, V) statistics.

        V is defined as Q - M clamped at zero; a negative difference larger
        than ``NEG_VAR_REL_TOL * Q`` in magnitude indicates corrupted state
        and raises instead of clamping.
        """
        m = float(self.mean @ self.mean)
        v = self.mean_sq_norm - m
        if v < 0.0:
            if -v > NEG_VAR_REL_TOL * self.mean_sq_norm:
                raise DataValidationError(
                    f"token {token_id}: variance {v} is negative beyond rounding tolerance"
                )
            v = 0.0
        return TokenStats(
            token_id=token_id,
            count=self.count,
            mean_sq_norm=self.mean_sq_norm,
            sq_norm_of_mean=m,
            total_var=v,
            mean=self.mean if keep_mean else None,
        )


@dataclass(frozen=True)
class TokenStats:
    """Finalized statistics of one token's embedding set.

    ``mean_sq_norm`` (Q in exports), ``sq_norm_of_mean`` (M) and
    ``total_var`` (V) satisfy Q = M + V by construction.  ``mean`` is kept
    only when requested; global aggregation requires it.
    """

    token_id: int
    count: int
    mean_sq_norm: float
    sq_norm_of_mean: float
    total_var: float
    mean: np.ndarray | None = None


@dataclass(frozen=True)
class GlobalStats:
    """Statistics of the pooled embedding set with its variance split into
    the within-token and between-token parts:

        total_var = within_var + between_var
        mean_sq_norm = sq_norm_of_mean + total_var
    """

    count: int
    mean: np.ndarray
    mean_sq_norm: float
    sq_norm_of_mean: float
    total_var: float
    within_var: float
    between_var: float


def accumulate_stream(records: Iterable, progress_every: int = 0) -> dict[int, TokenAccumulator]:
    """Run the one-pass accumulation over ``(token_id, vector)`` records.

    Returns one accumulator per distinct token id.  Memory is proportional
    to the number of distinct tokens times the dimension, never to the
    number of records.  Arithmetic is identical to chaining
    ``TokenAccumulator.init`` / ``update``; a mutable fast path avoids the
    per-record allocation of fresh state objects.
    """
    counts: dict[int, int] = {}
    means: dict[int, np.ndarray] = {}
    qs: dict[int, float] = {}
    dim = -1
    for index, (token_id, vector) in enumerate(records):
        vec = np.asarray(vector, dtype=np.float64)
        if vec.ndim != 1 or (dim >= 0 and vec.shape[0] != dim):
            raise DataValidationError(
                f"record {index}: vector shape {vec.shape} does not match stream dim {dim}", index=index
            )
        dim = vec.shape[0]
        sq = float(vec @ vec)
        if not np.isfinite(sq):
            # diagnose: a non-finite component, or a finite vector whose
            # squared norm overflows (equally unusable downstream)
            finite = np.isfinite(vec)
            component = int(np.argmin(finite)) if not finite.all() else None
            raise DataValidationError(
                f"record {index}: non-finite squared norm"
                + (f" (component {component})" if component is not None else ""),
                index=index,
                component=component,
            )
        token_id = int(token_id)
        k = counts.get(token_id)
        if k is None:
            counts[token_id] = 1
            means[token_id] = vec.copy()
            qs[token_id] = sq
        else:
            keep = k / (k + 1)
            take = 1.0 / (k + 1)
            mean = means[token_id]
            mean *= keep
            mean += vec * take
            qs[token_id] = qs[token_id] * keep + sq * take
            counts[token_id] = k + 1
    out: dict[int, TokenAccumulator] = {}
    for token_id, k in counts.items():
        mean = means[token_id]
        mean.setflags(write=False)
        out[token_id] = TokenAccumulator(count=k, mean=mean, mean_sq_norm=qs[token_id])
    return out


def finalize_all(
    accumulators: Mapping[int, TokenAccumulator], keep_mean: bool = False
) -> list[TokenStats]:
    """Finalize a token map into a list of stats sorted by token_id."""
    return [accumulators[tid].finalize(tid, keep_mean=keep_mean) for tid in sorted(accumulators)]


def merge_maps(
    maps: Sequence[Mapping[int, TokenAccumulator]],
) -> dict[int, TokenAccumulator]:
    """Merge per-partition token maps into one (partition/merge contract)."""
    out: dict[int, TokenAccumulator] = {}
    for part in maps:
        for token_id, acc in part.items():
            prev = out.get(token_id)
            out[token_id] = acc if prev is None else prev.merge(acc)
    return out


def aggregate_global(stats: Sequence[TokenStats]) -> GlobalStats:
    """Aggregate per-token statistics into pooled-set statistics.

    Every entry must carry its mean vector.  The pooled mean and mean
    squared norm are the count-weighted averages of the per-token values;
    the total variance splits into the count-weighted mean of per-token
    variances (within) plus the count-weighted squared distances of token
    means from the pooled mean (between).
    """
    if not stats:
        raise EmptyInputError("aggregate_global needs at least one TokenStats")
    for s in stats:
        if s.mean is None:
            raise DataValidationError(f"token {s.token_id}: mean vector missing; rerun with mean retention")
    counts = np.array([s.count for s in stats], dtype=np.float64)
    n = counts.sum()
    weights = counts / n
    mu = np.stack([s.mean for s in stats])
    q = np.array([s.mean_sq_norm for s in stats])
    v = np.array([s.total_var for s in stats])

    mean = weights @ mu
    mean_sq_norm = float(weights @ q)
    sq_norm_of_mean = float(mean @ mean)
    total_var = mean_sq_norm - sq_norm_of_mean
    if total_var < 0.0:
        if -total_var > NEG_VAR_REL_TOL * mean_sq_norm:
            raise DataValidationError(f"global variance {total_var} is negative beyond rounding tolerance")
        total_var = 0.0
    within = float(weights @ v)
    deltas = mu - mean
    between = float(weights @ np.einsum("ij,ij->i", deltas, deltas))
    mean.setflags(write=False)
    return GlobalStats(
        count=int(n),
        mean=mean,
        mean_sq_norm=mean_sq_norm,
        sq_norm_of_mean=sq_norm_of_mean,
        total_var=total_var,
        within_var=within,
        between_var=between,
    )


STATS_TSV_COLUMNS = ("token_id", "token", "n_t", "Q", "M", "V")


def write_stats_tsv(stats: Sequence[TokenStats], sink, vocab: Mapping[int, object] | None = None) -> None:
    """Write finalized stats as TSV with columns token_id, token, n_t, Q, M, V.

    The token column is looked up in ``vocab`` (sidecar entries or plain
    strings) and left empty when unknown.  Floats are written with
    ``repr``, so values round-trip exactly.
    """
    sink.write("\t".join(STATS_TSV_COLUMNS) + "\n")
    for s in stats:
        token = ""
        if vocab is not None and s.token_id in vocab:
            entry = vocab[s.token_id]
            token = entry[0] if isinstance(entry, tuple) else str(entry)
        sink.write(
            f"{s.token_id}\t{token}\t{s.count}\t"
            f"{s.mean_sq_norm!r}\t{s.sq_norm_of_mean!r}\t{s.total_var!r}\n"
        )


def read_stats_tsv(source) -> list[TokenStats]:
    """Read stats written by :func:`write_stats_tsv` (means not included)."""
    header = source.readline().rstrip("\n").split("\t")
    if tuple(header) != STATS_TSV_COLUMNS:
        raise DataValidationError(f"unexpected stats TSV header {header}")
    out = []
    for line in source:
        line = line.rstrip("\n")
        if not line:
            continue
        token_id, _token, n_t, q, m, v = line.split("\t")
        out.append(
            TokenStats(
                token_id=int(token_id),
                count=int(n_t),
                mean_sq_norm=float(q),
                sq_norm_of_mean=float(m),
                total_var=float(v),
            )
        )
    return out


def write_mean_matrix(stats: Sequence[TokenStats], sink) -> None:
    """Write the per-token mean vectors as raw little-endian float64 rows.

    Row order matches the stats sequence (and hence the TSV row order).
    float64 is used instead of the stream's float32 so that decompositions
    recomputed from the file still close to 1e-9.
    """
    for s in stats:
        if s.mean is None:
            raise DataValidationError(f"token {s.token_id}: mean vector missing")
        sink.write(np.ascontiguousarray(s.mean, dtype="<f8").tobytes())


def read_mean_matrix(source, n_rows: int, dim: int) -> np.ndarray:
    """Read a matrix written by :func:`write_mean_matrix`."""
    raw = source.read(n_rows * dim * 8)
    if len(raw) != n_rows * dim * 8:
        raise DataValidationError(
            f"mean matrix has {len(raw)} bytes, expected {n_rows * dim * 8} ({n_rows} rows x dim {dim})"
        )
    return np.frombuffer(raw, dtype="<f8").reshape(n_rows, dim).copy()


def attach_means(stats: Sequence[TokenStats], means: np.ndarray) -> list[TokenStats]:
    """Pair TSV-loaded stats with the rows of their mean matrix."""
    if len(stats) != means.shape[0]:
        raise DataValidationError(f"{len(stats)} stats rows but {means.shape[0]} mean rows")
    out = []
    for s, row in zip(stats, means):
        row = row.copy()
        row.setflags(write=False)
        out.append(
            TokenStats(
                token_id=s.token_id,
                count=s.count,
                mean_sq_norm=s.mean_sq_norm,
                sq_norm_of_mean=s.sq_norm_of_mean,
                total_var=s.total_var,
                mean=row,
            )
        )
    return out


def pseudo_token_stats(records: Iterable) -> TokenStats:
    """Accumulate every record as if it belonged to a single token.

    Gives the pooled mean and mean squared norm directly from the stream;
    used to cross-check :func:`aggregate_global`.
    """
    merged = accumulate_stream((0, vector) for _token_id, vector in records)
    if not merged:
        raise EmptyInputError("pseudo_token_stats needs at least one record")
    return merged[0].finalize(token_id=0, keep_mean=True)

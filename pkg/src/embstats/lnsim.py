"""Synthetic embedding generator for the layer-normalization output model.

Vectors are drawn as x = z * gamma + beta with the components of z i.i.d.
from a zero-mean unit-variance base distribution, which is the affine form
a layer-normalization output takes.  Under this model the per-token mean
squared norm concentrates near |gamma|^2 + |beta|^2 and its coefficient of
variation across tokens shrinks like 1/sqrt(n0), n0 being the smallest
token frequency; :func:`cv_scaling_study` measures that decay empirically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .analysis import coefficient_of_variation, ols_fit
from .errors import DataValidationError, DegenerateDataError
from .moments import accumulate_stream
from .streamfmt import EmbeddingRecord, StreamHeader

BASE_DISTRIBUTIONS = ("normal", "uniform")

_UNIFORM_HALF_WIDTH = math.sqrt(3.0)  # uniform on [-sqrt(3), sqrt(3)] has variance 1


@dataclass(frozen=True)
class LnSimConfig:
    """Generator settings: dimension, affine parameters, one frequency per
    synthetic token, the base law of z, and the seed."""

    dim: int
    gamma: np.ndarray
    beta: np.ndarray
    token_frequencies: tuple[int, ...]
    base_distribution: str = "normal"
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise DataValidationError(f"dim must be >= 1, got {self.dim}")
        gamma = np.asarray(self.gamma, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        if gamma.shape != (self.dim,) or beta.shape != (self.dim,):
            raise DataValidationError(
                f"gamma and beta must have shape ({self.dim},), got {gamma.shape} and {beta.shape}"
            )
        if not (np.isfinite(gamma).all() and np.isfinite(beta).all()):
            raise DataValidationError("gamma and beta must be finite")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "beta", beta)
        if not self.token_frequencies or any(n < 1 for n in self.token_frequencies):
            raise DataValidationError("token_frequencies must be a nonempty list of counts >= 1")
        if self.base_distribution not in BASE_DISTRIBUTIONS:
            raise DataValidationError(
                f"unknown base distribution {self.base_distribution!r}; choose from {BASE_DISTRIBUTIONS}"
            )

    def header(self) -> StreamHeader:
        return StreamHeader(
            dim=self.dim,
            layer=0,
            model_tag=f"lnsim/{self.base_distribution}/seed={self.seed}",
        )


def _token_seed(seed: int, token_index: int) -> np.random.SeedSequence:
    """Splitting rule for per-token sub-streams: hash of (seed, index)."""
    return np.random.SeedSequence(entropy=(int(seed), int(token_index)))


def token_vectors(config: LnSimConfig, token_index: int) -> np.ndarray:
    """All vectors of one synthetic token, shape (n_t, dim), float32.

    Per-token generation is independent (own sub-seed), so tokens may be
    generated in any order, or in parallel, with identical results.
    """
    n = config.token_frequencies[token_index]
    rng = np.random.default_rng(_token_seed(config.seed, token_index))
    if config.base_distribution == "normal":
        z = rng.standard_normal((n, config.dim))
    else:
        z = rng.uniform(-_UNIFORM_HALF_WIDTH, _UNIFORM_HALF_WIDTH, size=(n, config.dim))
    return (z * config.gamma + config.beta).astype(np.float32)


def generate_ln_stream(config: LnSimConfig) -> tuple[StreamHeader, Iterator[EmbeddingRecord]]:
    """Produce (header, record iterator); token t yields n_t records.

    Records are float32, exactly what the stream file format stores, so
    writing them with ``write_stream`` is byte-deterministic under the seed.
    """

    def records() -> Iterator[EmbeddingRecord]:
        for token_index in range(len(config.token_frequencies)):
            block = token_vectors(config, token_index)
            for row in block:
                yield EmbeddingRecord(token_index, row)

    return config.header(), records()


@dataclass(frozen=True)
class StudyRow:
    n0: int
    cv_q: float
    mean_q: float


@dataclass(frozen=True)
class StudyResult:
    """Scaling-study output: one row per minimum-frequency grid point, the
    fitted log-log slope of cv against n0 (None when some cv is zero, e.g.
    gamma = 0), and the grand mean of the per-token mean squared norms."""

    rows: tuple[StudyRow, ...]
    loglog_slope: float | None
    mean_q: float


def study_config(
    gamma,
    beta,
    n0: int,
    tokens_per_point: int,
    seed: int,
    grid_index: int,
    base_distribution: str = "normal",
) -> LnSimConfig:
    """Corpus settings for one grid point of the scaling study: every token
    has frequency n0, and the corpus seed is split off the study seed."""
    gamma = np.asarray(gamma, dtype=np.float64)
    return LnSimConfig(
        dim=gamma.shape[0],
        gamma=gamma,
        beta=beta,
        token_frequencies=(int(n0),) * tokens_per_point,
        base_distribution=base_distribution,
        seed=int(_token_seed(seed, grid_index).generate_state(1)[0]),
    )


def cv_scaling_study(
    gamma,
    beta,
    n0_grid,
    tokens_per_point: int,
    seed: int = 0,
    base_distribution: str = "normal",
) -> StudyResult:
    """Measure how the across-token dispersion of Q decays with frequency.

    For each n0 a corpus of ``tokens_per_point`` tokens, all with frequency
    n0, is generated and accumulated; the row records the coefficient of
    variation and mean of the per-token Q values.  The slope of
    log10(cv) on log10(n0) estimates the decay exponent (theory: -1/2).
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    n0_grid = [int(n) for n in n0_grid]
    if len(n0_grid) < 2 or any(b <= a for a, b in zip(n0_grid, n0_grid[1:])):
        raise DataValidationError("n0_grid must be strictly increasing with at least 2 entries")
    if tokens_per_point < 50:
        raise DataValidationError(f"tokens_per_point must be >= 50, got {tokens_per_point}")

    rows = []
    all_q: list[float] = []
    for grid_index, n0 in enumerate(n0_grid):
        config = study_config(gamma, beta, n0, tokens_per_point, seed, grid_index, base_distribution)
        _, records = generate_ln_stream(config)
        accs = accumulate_stream(records)
        q_values = [accs[tid].mean_sq_norm for tid in sorted(accs)]
        all_q.extend(q_values)
        rows.append(
            StudyRow(
                n0=n0,
                cv_q=_cv_or_zero(q_values),
                mean_q=float(np.mean(q_values)),
            )
        )

    slope: float | None = None
    if all(row.cv_q > 0.0 for row in rows):
        fit = ols_fit(np.log10([row.n0 for row in rows]), np.log10([row.cv_q for row in rows]))
        slope = fit.slope
    return StudyResult(rows=tuple(rows), loglog_slope=slope, mean_q=float(np.mean(all_q)))


def _cv_or_zero(values) -> float:
    """C.V. that treats an exactly-constant sample as zero dispersion."""
    try:
        return coefficient_of_variation(values)
    except DegenerateDataError:
        # mean zero cannot happen for Q >= 0 unless all values are zero
        return 0.0

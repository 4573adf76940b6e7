"""Derived analyses over finalized token statistics.

Covers ordinary least squares with R^2, the variance-vs-norm trade-off
regression, frequency regressions in raw and log10(1+x) modes, coefficient
of variation, per-layer ratio reports, frequency-stratified token sampling
and origin-preserving 2-D PCA.  Everything here is a pure function over
in-memory collections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataValidationError, DegenerateDataError, EmptyInputError
from .moments import GlobalStats, TokenStats


@dataclass(frozen=True)
class RegressionResult:
    """Simple OLS fit: slope, intercept, coefficient of determination."""

    slope: float
    intercept: float
    r2: float
    n_points: int


def ols_fit(x, y) -> RegressionResult:
    """Least-squares line of y on x with R^2 = 1 - SS_res/SS_tot.

    Raises :class:`DegenerateDataError` for fewer than two points, constant
    x (undefined slope) or constant y (undefined R^2).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataValidationError(f"x and y must be equal-length 1-D, got {x.shape} and {y.shape}")
    n = x.shape[0]
    if n < 2:
        raise DegenerateDataError(f"need at least 2 points, got {n}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DataValidationError("regression inputs must be finite")
    x_mean = x.mean()
    y_mean = y.mean()
    dx = x - x_mean
    dy = y - y_mean
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise DegenerateDataError("x values are all equal; slope is undefined")
    ss_tot = float(dy @ dy)
    if ss_tot == 0.0:
        raise DegenerateDataError("y values are all equal; R^2 is undefined")
    slope = float(dx @ dy) / sxx
    intercept = y_mean - slope * x_mean
    residuals = y - (slope * x + intercept)
    r2 = 1.0 - float(residuals @ residuals) / ss_tot
    if -1e-12 < r2 < 0.0:
        r2 = 0.0  # rounding spill below the SS_res <= SS_tot bound
    return RegressionResult(slope=slope, intercept=float(intercept), r2=r2, n_points=n)


def frequency_filter(
    stats: Sequence[TokenStats], lo_log10: float = 1.0, hi_log10: float = 5.0
) -> list[TokenStats]:
    """Keep tokens whose log10 occurrence count lies in [lo, hi], inclusive."""
    if lo_log10 > hi_log10:
        raise DataValidationError(f"lo_log10 {lo_log10} exceeds hi_log10 {hi_log10}")
    return [s for s in stats if lo_log10 <= math.log10(s.count) <= hi_log10]


def mv_regression(stats: Sequence[TokenStats]) -> RegressionResult:
    """Regress total variance on squared mean norm (raw values)."""
    m = [s.sq_norm_of_mean for s in stats]
    v = [s.total_var for s in stats]
    return ols_fit(m, v)


def freq_regressions(
    stats: Sequence[TokenStats], log_values: bool = True
) -> dict[str, RegressionResult]:
    """Fit Q, M and V against log10 of the occurrence count.

    With ``log_values`` (the default) the responses are log10(1 + value);
    with ``log_values=False`` the raw values are fitted.  Returns one
    result per statistic, keyed "Q", "M", "V".  A response that is exactly
    constant is a legitimate flat relationship here (unlike in bare
    :func:`ols_fit`) and reports slope 0 with r2 0.
    """
    if not stats:
        raise EmptyInputError("freq_regressions needs at least one token")
    log_n = np.log10([s.count for s in stats])
    columns = {
        "Q": np.array([s.mean_sq_norm for s in stats]),
        "M": np.array([s.sq_norm_of_mean for s in stats]),
        "V": np.array([s.total_var for s in stats]),
    }
    out = {}
    for name, values in columns.items():
        y = np.log10(1.0 + values) if log_values else values
        if np.all(y == y[0]):
            out[name] = RegressionResult(slope=0.0, intercept=float(y[0]), r2=0.0, n_points=len(y))
        else:
            out[name] = ols_fit(log_n, y)
    return out


def coefficient_of_variation(values) -> float:
    """Population standard deviation divided by the mean."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInputError("coefficient_of_variation needs at least one value")
    if np.all(arr == arr[0]):
        # exactly-constant input has zero dispersion; computing it through
        # mean/std would leave rounding noise of order 1e-16
        if arr[0] == 0.0:
            raise DegenerateDataError("mean is zero; coefficient of variation is undefined")
        return 0.0
    mean = arr.mean()
    if mean == 0.0:
        raise DegenerateDataError("mean is zero; coefficient of variation is undefined")
    return float(arr.std() / mean)


@dataclass(frozen=True)
class LayerReportRow:
    """Per-layer summary: global moments, their Q-normalized ratios, the
    dispersion of per-token Q, and the V-on-M trade-off fit.

    Layers whose filtered token set is empty keep ``n_tokens == 0`` and all
    optional fields None.  ``mv_slope``/``mv_r2`` are None when the fit is
    impossible (fewer than two tokens, or degenerate M or V)."""

    layer: int
    n_tokens: int
    mean_sq_norm: float | None = None
    sq_norm_of_mean: float | None = None
    total_var: float | None = None
    within_var: float | None = None
    between_var: float | None = None
    ratio_mean: float | None = None  # M / Q
    ratio_within: float | None = None  # V_W / Q
    ratio_between: float | None = None  # V_B / Q
    within_share: float | None = None  # V_W / V
    cv_q: float | None = None
    mv_slope: float | None = None
    mv_r2: float | None = None


def layer_report(
    layers: Sequence[tuple[int, Sequence[TokenStats], GlobalStats | None]],
) -> list[LayerReportRow]:
    """Build one report row per (layer, filtered stats, global stats) triple.

    The three Q-normalized ratios of a populated row sum to 1 up to
    rounding, since Q = M + V_W + V_B.
    """
    rows = []
    for layer, stats, glob in sorted(layers, key=lambda item: item[0]):
        if not stats or glob is None:
            rows.append(LayerReportRow(layer=layer, n_tokens=len(stats)))
            continue
        q = glob.mean_sq_norm
        ratios = {}
        if q > 0.0:
            ratios = {
                "ratio_mean": glob.sq_norm_of_mean / q,
                "ratio_within": glob.within_var / q,
                "ratio_between": glob.between_var / q,
            }
        within_share = glob.within_var / glob.total_var if glob.total_var > 0.0 else None
        try:
            cv_q = coefficient_of_variation([s.mean_sq_norm for s in stats])
        except DegenerateDataError:
            cv_q = None
        try:
            fit = mv_regression(stats)
            mv_slope, mv_r2 = fit.slope, fit.r2
        except (DegenerateDataError, DataValidationError):
            mv_slope = mv_r2 = None
        rows.append(
            LayerReportRow(
                layer=layer,
                n_tokens=len(stats),
                mean_sq_norm=glob.mean_sq_norm,
                sq_norm_of_mean=glob.sq_norm_of_mean,
                total_var=glob.total_var,
                within_var=glob.within_var,
                between_var=glob.between_var,
                within_share=within_share,
                cv_q=cv_q,
                mv_slope=mv_slope,
                mv_r2=mv_r2,
                **ratios,
            )
        )
    return rows


def sample_tokens(
    stats: Sequence[TokenStats],
    vocab: Mapping[int, object],
    seed: int,
    lo_log10: float = 1.0,
    hi_log10: float = 5.0,
    min_chars: int = 3,
    n_bins: int = 10,
) -> list[int]:
    """Pick tokens with frequencies spread evenly on the log10 scale.

    Eligible tokens satisfy the frequency window and have at least
    ``min_chars`` characters (from the vocabulary sidecar).  Their log10
    count range is split into ``n_bins`` equal bins; bin r contributes

        N_r = 2 + floor(sqrt(4 * |T_r| / max_r |T_r|))

    tokens drawn uniformly without replacement (all of them when the bin is
    smaller).  Selection is deterministic in (input set, seed).
    """
    eligible = []
    for s in frequency_filter(stats, lo_log10, hi_log10):
        entry = vocab.get(s.token_id)
        if entry is None:
            continue
        char_count = entry[1] if isinstance(entry, tuple) else len(str(entry))
        if char_count >= min_chars:
            eligible.append(s)
    if not eligible:
        raise EmptyInputError("no token passes the frequency and character filters")

    logs = np.log10([s.count for s in eligible])
    lo_v, hi_v = float(logs.min()), float(logs.max())
    span = hi_v - lo_v
    bins: list[list[int]] = [[] for _ in range(n_bins)]
    for s, value in zip(eligible, logs):
        r = 0 if span == 0.0 else min(int((value - lo_v) / span * n_bins), n_bins - 1)
        bins[r].append(s.token_id)

    max_size = max(len(b) for b in bins)
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for bucket in bins:
        if not bucket:
            continue
        want = 2 + math.isqrt(4 * len(bucket) // max_size)
        bucket = sorted(bucket)
        if want >= len(bucket):
            chosen.extend(bucket)
        else:
            chosen.extend(int(t) for t in rng.choice(bucket, size=want, replace=False))
    return chosen


@dataclass(frozen=True)
class Pca2D:
    """Two-component projection with the original origin mapped to (0, 0).

    ``points`` has one row per input vector; ``explained_variance`` holds
    the two leading eigenvalues of the (population) covariance.
    """

    points: np.ndarray
    origin: np.ndarray
    explained_variance: np.ndarray


def pca_project(vectors) -> Pca2D:
    """Project vectors onto their top-2 principal axes, keeping the origin.

    The d-dimensional zero vector is pushed through the same transform and
    all points are translated so it lands exactly at (0, 0).  Data with
    fewer than two positive covariance eigenvalues raises
    :class:`DegenerateDataError` naming the rank.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise DataValidationError(f"expected a 2-D array of vectors, got shape {x.shape}")
    n, d = x.shape
    if n < 3:
        raise DataValidationError(f"need at least 3 vectors, got {n}")
    if d < 2:
        raise DataValidationError(f"need dimension >= 2, got {d}")
    if not np.isfinite(x).all():
        raise DataValidationError("vectors must be finite")

    center = x.mean(axis=0)
    centered = x - center
    cov = (centered.T @ centered) / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    rank = int(np.sum(eigvals > max(eigvals[0], 0.0) * 1e-12)) if eigvals[0] > 0.0 else 0
    if rank < 2:
        raise DegenerateDataError(f"data has rank {rank}; two principal components require rank >= 2")

    components = eigvecs[:, :2].copy()
    # Fix the sign so results are reproducible across LAPACK builds.
    for j in range(2):
        pivot = np.argmax(np.abs(components[:, j]))
        if components[pivot, j] < 0.0:
            components[:, j] = -components[:, j]

    projected = centered @ components
    origin_image = (-center) @ components
    points = projected - origin_image
    return Pca2D(
        points=points,
        origin=np.zeros(2),
        explained_variance=eigvals[:2].copy(),
    )


def fixed_width_histogram(values, bins: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Counts over ``bins`` equal-width bins spanning [min, max]."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInputError("histogram needs at least one value")
    counts, edges = np.histogram(arr, bins=bins, range=(float(arr.min()), float(arr.max())))
    return edges, counts

"""Streaming moment statistics for contextualized embedding streams.

The package splits into:

- :mod:`embstats.streamfmt` - the binary embedding-stream format and
  vocabulary sidecar (the producer/consumer wire contract);
- :mod:`embstats.moments` - one-pass per-token accumulation, mergeable
  partial states, and the global within/between variance decomposition;
- :mod:`embstats.analysis` - OLS fits, coefficient of variation, layer
  ratio reports, token sampling and origin-preserving 2-D PCA;
- :mod:`embstats.lnsim` - synthetic generator for layer-normalization
  outputs and the dispersion-vs-frequency scaling study;
- :mod:`embstats.cli` - the ``embstats`` command wiring it all together.
"""

from .analysis import (
    LayerReportRow,
    Pca2D,
    RegressionResult,
    coefficient_of_variation,
    fixed_width_histogram,
    freq_regressions,
    frequency_filter,
    layer_report,
    mv_regression,
    ols_fit,
    pca_project,
    sample_tokens,
)
from .errors import (
    DataValidationError,
    DegenerateDataError,
    EmbStatsError,
    EmptyInputError,
    StreamFormatError,
    TruncatedStreamError,
)
from .lnsim import LnSimConfig, StudyResult, StudyRow, cv_scaling_study, generate_ln_stream, token_vectors
from .moments import (
    GlobalStats,
    TokenAccumulator,
    TokenStats,
    accumulate_stream,
    aggregate_global,
    attach_means,
    finalize_all,
    merge_maps,
    pseudo_token_stats,
    read_mean_matrix,
    read_stats_tsv,
    write_mean_matrix,
    write_stats_tsv,
)
from .streamfmt import (
    EmbeddingRecord,
    StreamHeader,
    VocabEntry,
    read_header,
    read_stream,
    read_vocab,
    write_stream,
    write_vocab,
)

__version__ = "0.1.0"

__all__ = [
    "DataValidationError",
    "DegenerateDataError",
    "EmbStatsError",
    "EmbeddingRecord",
    "EmptyInputError",
    "GlobalStats",
    "LayerReportRow",
    "LnSimConfig",
    "Pca2D",
    "RegressionResult",
    "StreamFormatError",
    "StreamHeader",
    "StudyResult",
    "StudyRow",
    "TokenAccumulator",
    "TokenStats",
    "TruncatedStreamError",
    "VocabEntry",
    "accumulate_stream",
    "aggregate_global",
    "attach_means",
    "coefficient_of_variation",
    "cv_scaling_study",
    "finalize_all",
    "fixed_width_histogram",
    "freq_regressions",
    "frequency_filter",
    "generate_ln_stream",
    "layer_report",
    "merge_maps",
    "mv_regression",
    "ols_fit",
    "pca_project",
    "pseudo_token_stats",
    "read_header",
    "read_mean_matrix",
    "read_stats_tsv",
    "read_stream",
    "read_vocab",
    "sample_tokens",
    "token_vectors",
    "write_mean_matrix",
    "write_stats_tsv",
    "write_stream",
    "write_vocab",
]

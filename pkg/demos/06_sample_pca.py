# Pick tokens spread evenly over the log-frequency range, pool their
# vectors, and project everything to 2-D while keeping the original origin
# visible at (0, 0).

import numpy as np

from embstats import accumulate_stream, finalize_all, pca_project, sample_tokens

rng = np.random.default_rng(4)

# Corpus: 60 tokens whose frequencies span 10..10^4; clusters farther from
# the origin are tighter (the norm-variance trade-off, by construction).
dim = 24
records = []
vocab = {}
frequencies = np.unique(np.logspace(1, 4, 60).astype(int))
for tid, n_t in enumerate(frequencies):
    vocab[tid] = (f"token{tid:03d}", 8)
    distance = rng.uniform(2.0, 12.0)
    center = rng.standard_normal(dim)
    center *= distance / np.linalg.norm(center)
    spread = 6.0 / distance
    block = center + rng.normal(0, spread, size=(int(n_t), dim))
    records.extend((tid, row) for row in block)

stats = finalize_all(accumulate_stream(records), keep_mean=True)
chosen = sample_tokens(stats, vocab, seed=11)
print(f"{len(chosen)} tokens sampled across the frequency range:")
by_id = {s.token_id: s for s in stats}
for tid in chosen[:8]:
    print(f"  {vocab[tid][0]}  n_t={by_id[tid].count}")

pooled = np.array([vec for tid, vec in records if tid in set(chosen)])
projection = pca_project(pooled)
print(f"\npooled vectors: {pooled.shape[0]} points in {dim}-D -> 2-D")
print(f"explained variance of the two components: {np.round(projection.explained_variance, 2)}")
print(f"origin lands at ({projection.origin[0]}, {projection.origin[1]})")

spans = projection.points.max(axis=0) - projection.points.min(axis=0)
print(f"projected cloud spans {spans.round(1)} along the two axes")

# One-pass accumulation of per-token moment statistics, checked against a
# direct two-pass computation, plus the partition/merge equivalence that
# makes parallel accumulation safe.

import numpy as np

from embstats import TokenAccumulator, accumulate_stream, finalize_all, merge_maps

rng = np.random.default_rng(1)

# 5000 occurrences of 40 token types in 8 dimensions.
token_ids = rng.integers(0, 40, size=5000)
vectors = rng.uniform(-100, 100, size=(5000, 8))

stats = finalize_all(accumulate_stream(zip(token_ids, vectors)))

print("token  n_t    Q         M         V        Q-(M+V)")
for s in stats[:5]:
    gap = s.mean_sq_norm - (s.sq_norm_of_mean + s.total_var)
    print(
        f"{s.token_id:>5}  {s.count:>4}  {s.mean_sq_norm:9.2f} {s.sq_norm_of_mean:9.2f}"
        f" {s.total_var:9.2f}  {gap:.1e}"
    )

# The same numbers from the definitions: mean of |x|^2, |mean|^2, and the
# summed per-component variances.
block = vectors[token_ids == stats[0].token_id]
mu = block.mean(axis=0)
q, m = float((block**2).sum(axis=1).mean()), float(mu @ mu)
v = float(((block - mu) ** 2).sum(axis=1).mean())
print(f"\ntwo-pass check on token {stats[0].token_id}:")
print(f"  Q {q:.6f} vs streaming {stats[0].mean_sq_norm:.6f}")
print(f"  M {m:.6f} vs streaming {stats[0].sq_norm_of_mean:.6f}")
print(f"  V {v:.6f} vs streaming {stats[0].total_var:.6f}")

# Accumulators are mergeable: cut the stream anywhere, accumulate the parts
# independently, merge, and the result matches the sequential pass.
parts = [
    accumulate_stream(zip(token_ids[a:b], vectors[a:b]))
    for a, b in [(0, 1200), (1200, 3700), (3700, 5000)]
]
merged = merge_maps(parts)
sequential = accumulate_stream(zip(token_ids, vectors))
worst = max(
    abs(merged[t].mean_sq_norm - sequential[t].mean_sq_norm) / sequential[t].mean_sq_norm
    for t in sequential
)
print(f"\nmerged vs sequential, worst relative gap in Q: {worst:.2e}")

# Single vectors are valid accumulators too; their variance is exactly zero.
single = TokenAccumulator.init([3.0, 4.0]).finalize(token_id=99)
print(f"single occurrence: Q={single.mean_sq_norm}, V={single.total_var}")

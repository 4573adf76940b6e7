# Treat each token's embedding set as a cluster and split the variance of
# the pooled set into a within-cluster and a between-cluster part.

import numpy as np

from embstats import accumulate_stream, aggregate_global, finalize_all

rng = np.random.default_rng(2)


def corpus(cluster_spread, center_spread, n_tokens=30, per_token=200, dim=16):
    records = []
    for tid in range(n_tokens):
        center = rng.normal(0, center_spread, size=dim)
        block = center + rng.normal(0, cluster_spread, size=(per_token, dim))
        records.extend((tid, row) for row in block)
    return records


for name, cluster_spread, center_spread in [
    ("tight clusters, spread-out centers", 0.3, 3.0),
    ("wide clusters, bunched centers    ", 3.0, 0.3),
]:
    stats = finalize_all(accumulate_stream(corpus(cluster_spread, center_spread)), keep_mean=True)
    glob = aggregate_global(stats)
    gap = glob.total_var - (glob.within_var + glob.between_var)
    print(name)
    print(f"  V = {glob.total_var:9.2f}   V_within = {glob.within_var:9.2f}   V_between = {glob.between_var:9.2f}")
    print(f"  within share = {glob.within_var / glob.total_var:5.1%}   decomposition gap = {gap:.2e}")

# The same split also closes against Q and M: Q = M + V_within + V_between.
stats = finalize_all(accumulate_stream(corpus(1.0, 1.0)), keep_mean=True)
glob = aggregate_global(stats)
total = glob.sq_norm_of_mean + glob.within_var + glob.between_var
print(f"\nQ = {glob.mean_sq_norm:.6f}  M + V_W + V_B = {total:.6f}")

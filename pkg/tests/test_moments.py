"""Accumulator arithmetic against two-pass oracles, merge equivalence,
identities, and the global variance decomposition."""

import math

import numpy as np
import pytest

from embstats.errors import DataValidationError, EmptyInputError
from embstats.moments import (
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

from _oracles import global_stats_direct, group_by_token, random_stream, token_stats_two_pass, within_tol


class TestInit:
    def test_three_four(self):
        acc = TokenAccumulator.init([3.0, 4.0])
        assert acc.count == 1
        assert np.array_equal(acc.mean, [3.0, 4.0])
        assert acc.mean_sq_norm == 25.0

    def test_zero_vector(self):
        acc = TokenAccumulator.init([0.0, 0.0, 0.0])
        assert acc.count == 1
        assert np.array_equal(acc.mean, np.zeros(3))
        assert acc.mean_sq_norm == 0.0

    def test_q_matches_component_sum(self, rng):
        x = rng.uniform(-100, 100, size=16)
        acc = TokenAccumulator.init(x)
        brute = float(sum(float(c) * float(c) for c in x))
        assert math.isclose(acc.mean_sq_norm, brute, rel_tol=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(DataValidationError):
            TokenAccumulator.init([1.0, float("inf")])

    def test_does_not_alias_caller_array(self):
        x = np.array([1.0, 2.0])
        acc = TokenAccumulator.init(x)
        x[0] = 99.0
        assert acc.mean[0] == 1.0


class TestUpdate:
    def test_one_then_three(self):
        acc = TokenAccumulator.init([1.0]).update([3.0])
        assert acc.count == 2
        assert np.array_equal(acc.mean, [2.0])
        assert acc.mean_sq_norm == 5.0  # (1 + 9) / 2

    def test_pushing_own_mean_is_a_fixed_point(self, rng):
        vectors = [rng.uniform(-10, 10, size=8) for _ in range(5)]
        acc = TokenAccumulator.init(vectors[0])
        for v in vectors[1:]:
            acc = acc.update(v)
        mean_before = acc.mean.copy()
        pushed = list(vectors)
        for _ in range(20):
            pushed.append(mean_before)
            acc = acc.update(mean_before)
            _, q, _, _ = token_stats_two_pass(pushed)
            np.testing.assert_allclose(acc.mean, mean_before, rtol=1e-12)
            assert math.isclose(acc.mean_sq_norm, q, rel_tol=1e-12)

    def test_constant_stream(self, rng):
        x = rng.uniform(-5, 5, size=4)
        acc = TokenAccumulator.init(x)
        for _ in range(499):
            acc = acc.update(x)
        assert acc.count == 500
        np.testing.assert_allclose(acc.mean, x, rtol=1e-12)
        assert math.isclose(acc.mean_sq_norm, float(x @ x), rel_tol=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(DataValidationError):
            TokenAccumulator.init([1.0, 2.0]).update([1.0])

    def test_streaming_matches_two_pass_oracle(self, rng):
        """Running means against sum-then-divide, 1e5 vectors, [-100, 100]."""
        n, dim = 100_000, 8
        x = rng.uniform(-100, 100, size=(n, dim))
        accs = accumulate_stream((0, row) for row in x)
        stats = accs[0].finalize(0)
        _, q, m, v = token_stats_two_pass(x)
        assert within_tol(stats.mean_sq_norm, q)
        assert within_tol(stats.sq_norm_of_mean, m)
        assert within_tol(stats.total_var, v)


class TestMerge:
    def test_merge_equals_sequential_pair(self):
        merged = TokenAccumulator.init([1.0]).merge(TokenAccumulator.init([3.0]))
        updated = TokenAccumulator.init([1.0]).update([3.0])
        assert merged.count == updated.count
        np.testing.assert_allclose(merged.mean, updated.mean, rtol=1e-15)
        np.testing.assert_allclose(merged.mean_sq_norm, updated.mean_sq_norm, rtol=1e-15)

    def test_self_merge_preserves_means(self, rng):
        acc = accumulate_stream((0, v) for v in rng.uniform(-1, 1, size=(10, 3)))[0]
        doubled = acc.merge(acc)
        assert doubled.count == 2 * acc.count
        np.testing.assert_array_equal(doubled.mean, acc.mean)
        assert doubled.mean_sq_norm == acc.mean_sq_norm

    def test_partitioned_equals_sequential(self, rng):
        """1000 vectors in 7 contiguous chunks, merged vs one pass."""
        x = rng.uniform(-100, 100, size=(1000, 5))
        bounds = sorted(rng.choice(np.arange(1, 1000), size=6, replace=False))
        chunks = np.split(x, bounds)
        assert len(chunks) == 7
        parts = [accumulate_stream((0, v) for v in chunk) for chunk in chunks]
        merged = merge_maps(parts)[0]
        sequential = accumulate_stream((0, v) for v in x)[0]
        assert merged.count == sequential.count == 1000
        assert within_tol(merged.mean, sequential.mean)
        assert within_tol(merged.mean_sq_norm, sequential.mean_sq_norm)

    def test_merge_commutes(self, rng):
        a = accumulate_stream((0, v) for v in rng.uniform(-5, 5, size=(13, 4)))[0]
        b = accumulate_stream((0, v) for v in rng.uniform(-5, 5, size=(29, 4)))[0]
        ab, ba = a.merge(b), b.merge(a)
        assert ab.count == ba.count
        assert within_tol(ab.mean, ba.mean)
        assert within_tol(ab.mean_sq_norm, ba.mean_sq_norm)

    def test_any_parenthesization_agrees(self, rng):
        x = rng.uniform(-50, 50, size=(300, 4))
        chunks = np.split(x, [70, 150, 210])
        parts = [accumulate_stream((0, v) for v in chunk)[0] for chunk in chunks]
        left = parts[0].merge(parts[1]).merge(parts[2]).merge(parts[3])
        right = parts[0].merge(parts[1].merge(parts[2].merge(parts[3])))
        pairs = parts[0].merge(parts[1]).merge(parts[2].merge(parts[3]))
        sequential = accumulate_stream((0, v) for v in x)[0]
        for candidate in (left, right, pairs):
            assert candidate.count == 300
            assert within_tol(candidate.mean, sequential.mean)
            assert within_tol(candidate.mean_sq_norm, sequential.mean_sq_norm)

    def test_dim_mismatch(self):
        with pytest.raises(DataValidationError):
            TokenAccumulator.init([1.0]).merge(TokenAccumulator.init([1.0, 2.0]))


class TestFinalize:
    def test_printed_scale_pairs(self):
        """Q/M pairs at the magnitudes of published reference values."""
        for q, m, v in [(494.1, 239.9, 254.2), (485.6, 404.5, 81.1)]:
            mean = np.array([math.sqrt(m), 0.0])
            mean.setflags(write=False)
            acc = TokenAccumulator(count=10, mean=mean, mean_sq_norm=q)
            stats = acc.finalize(0)
            np.testing.assert_allclose(stats.total_var, v, rtol=1e-12)
            np.testing.assert_allclose(
                stats.sq_norm_of_mean + stats.total_var, q, rtol=1e-12
            )

    def test_single_occurrence_has_zero_variance(self, rng):
        for _ in range(20):
            stats = TokenAccumulator.init(rng.uniform(-100, 100, size=6)).finalize(1)
            assert stats.total_var == 0.0
            assert stats.mean_sq_norm == stats.sq_norm_of_mean

    def test_variance_is_clamped_difference(self, rng):
        x = rng.uniform(-100, 100, size=(50, 3))
        stats = accumulate_stream((0, v) for v in x)[0].finalize(0)
        assert stats.total_var == max(stats.mean_sq_norm - stats.sq_norm_of_mean, 0.0)

    def test_tiny_negative_difference_clamps_to_zero(self):
        mean = np.array([2.0, 0.0])
        mean.setflags(write=False)
        q = 4.0 * (1.0 - 1e-12)
        stats = TokenAccumulator(count=3, mean=mean, mean_sq_norm=q).finalize(0)
        assert stats.total_var == 0.0

    def test_large_negative_difference_is_an_error(self):
        mean = np.array([2.0, 0.0])
        mean.setflags(write=False)
        with pytest.raises(DataValidationError):
            TokenAccumulator(count=3, mean=mean, mean_sq_norm=2.0).finalize(0)

    def test_mean_kept_only_on_request(self):
        acc = TokenAccumulator.init([1.0, 2.0])
        assert acc.finalize(0).mean is None
        kept = acc.finalize(0, keep_mean=True)
        assert np.array_equal(kept.mean, [1.0, 2.0])


class TestAccumulateStream:
    def test_counts(self):
        accs = accumulate_stream([(1, [1.0]), (2, [2.0]), (1, [3.0])])
        assert set(accs) == {1, 2}
        assert accs[1].count == 2
        assert accs[2].count == 1

    def test_counts_partition_record_total(self, rng):
        ids, x = random_stream(rng, 5000, 37, 3)
        accs = accumulate_stream(zip(ids, x))
        assert sum(a.count for a in accs.values()) == 5000

    def test_against_per_token_two_pass(self, rng):
        """10k records over 100 tokens: every finalized triple matches."""
        ids, x = random_stream(rng, 10_000, 100, 16)
        stats = finalize_all(accumulate_stream(zip(ids, x)))
        groups = group_by_token(ids, x)
        for s in stats:
            _, q, m, v = token_stats_two_pass(groups[s.token_id])
            assert s.count == groups[s.token_id].shape[0]
            assert within_tol(s.mean_sq_norm, q)
            assert within_tol(s.sq_norm_of_mean, m)
            assert within_tol(s.total_var, v)

    def test_permutation_invariance(self, rng):
        ids, x = random_stream(rng, 3000, 40, 6)
        order = rng.permutation(3000)
        stats_a = finalize_all(accumulate_stream(zip(ids, x)))
        stats_b = finalize_all(accumulate_stream(zip(ids[order], x[order])))
        for a, b in zip(stats_a, stats_b):
            assert a.token_id == b.token_id and a.count == b.count
            assert within_tol(a.mean_sq_norm, b.mean_sq_norm)
            assert within_tol(a.sq_norm_of_mean, b.sq_norm_of_mean)
            assert within_tol(a.total_var, b.total_var)

    def test_jensen_inequality_holds_throughout(self, rng):
        x = rng.uniform(-100, 100, size=(500, 4))
        acc = TokenAccumulator.init(x[0])
        for row in x[1:]:
            acc = acc.update(row)
            assert acc.mean_sq_norm >= float(acc.mean @ acc.mean) * (1 - 1e-9)

    def test_bad_record_reports_index(self):
        records = [(0, [1.0, 1.0]), (0, [np.nan, 1.0])]
        with pytest.raises(DataValidationError) as err:
            accumulate_stream(records)
        assert err.value.index == 1


class TestAggregateGlobal:
    def test_single_token(self, rng):
        x = rng.uniform(-3, 3, size=(20, 4))
        stats = finalize_all(accumulate_stream((5, v) for v in x), keep_mean=True)
        glob = aggregate_global(stats)
        assert glob.between_var == 0.0
        assert within_tol(glob.within_var, stats[0].total_var)
        np.testing.assert_array_equal(glob.mean, stats[0].mean)

    def test_two_singleton_tokens_hand_oracle(self):
        stats = finalize_all(accumulate_stream([(0, [0.0]), (1, [2.0])]), keep_mean=True)
        glob = aggregate_global(stats)
        assert glob.count == 2
        np.testing.assert_allclose(glob.mean, [1.0])
        assert glob.mean_sq_norm == 2.0
        assert glob.sq_norm_of_mean == 1.0
        assert glob.within_var == 0.0
        assert glob.between_var == 1.0
        assert glob.total_var == 1.0

    def test_decomposition_matches_direct_oracle(self, rng):
        ids, x = random_stream(rng, 8000, 60, 8)
        stats = finalize_all(accumulate_stream(zip(ids, x)), keep_mean=True)
        glob = aggregate_global(stats)
        mu, q, m, v, vw, vb = global_stats_direct(group_by_token(ids, x))
        assert within_tol(glob.mean, mu)
        assert within_tol(glob.mean_sq_norm, q)
        assert within_tol(glob.sq_norm_of_mean, m)
        assert within_tol(glob.total_var, v)
        assert within_tol(glob.within_var, vw)
        assert within_tol(glob.between_var, vb)

    def test_variance_splits_within_tolerance(self, rng):
        for trial in range(10):
            ids, x = random_stream(rng, 2000, 150, 5)
            stats = finalize_all(accumulate_stream(zip(ids, x)), keep_mean=True)
            glob = aggregate_global(stats)
            budget = 1e-9 * max(glob.total_var, 1.0)
            assert abs(glob.total_var - (glob.within_var + glob.between_var)) <= budget

    def test_equals_single_pseudo_token(self, rng):
        """Weighted aggregation vs. accumulating the pooled corpus directly."""
        ids, x = random_stream(rng, 6000, 80, 8)
        stats = finalize_all(accumulate_stream(zip(ids, x)), keep_mean=True)
        glob = aggregate_global(stats)
        pooled = pseudo_token_stats(zip(ids, x))
        assert within_tol(glob.mean, pooled.mean)
        assert within_tol(glob.mean_sq_norm, pooled.mean_sq_norm)

    def test_empty_is_an_error(self):
        with pytest.raises(EmptyInputError):
            aggregate_global([])

    def test_missing_mean_is_an_error(self):
        stats = finalize_all(accumulate_stream([(0, [1.0])]))
        with pytest.raises(DataValidationError, match="mean"):
            aggregate_global(stats)


class TestExports:
    def test_stats_tsv_round_trips_exactly(self, rng, tmp_path):
        ids, x = random_stream(rng, 500, 20, 4)
        stats = finalize_all(accumulate_stream(zip(ids, x)))
        path = tmp_path / "stats.tsv"
        with open(path, "w") as f:
            write_stats_tsv(stats, f, vocab={0: ("zero", 4)})
        with open(path) as f:
            loaded = read_stats_tsv(f)
        assert len(loaded) == len(stats)
        for a, b in zip(stats, loaded):
            assert a.token_id == b.token_id
            assert a.count == b.count
            assert a.mean_sq_norm == b.mean_sq_norm
            assert a.sq_norm_of_mean == b.sq_norm_of_mean
            assert a.total_var == b.total_var

    def test_mean_matrix_round_trips_exactly(self, rng, tmp_path):
        ids, x = random_stream(rng, 300, 11, 7)
        stats = finalize_all(accumulate_stream(zip(ids, x)), keep_mean=True)
        path = tmp_path / "mu.bin"
        with open(path, "wb") as f:
            write_mean_matrix(stats, f)
        with open(path, "rb") as f:
            matrix = read_mean_matrix(f, n_rows=len(stats), dim=7)
        reattached = attach_means([TokenStats(s.token_id, s.count, s.mean_sq_norm, s.sq_norm_of_mean, s.total_var) for s in stats], matrix)
        for original, back in zip(stats, reattached):
            np.testing.assert_array_equal(original.mean, back.mean)

    def test_attach_means_length_mismatch(self, rng):
        stats = finalize_all(accumulate_stream([(0, [1.0, 2.0])]))
        with pytest.raises(DataValidationError):
            attach_means(stats, np.zeros((3, 2)))

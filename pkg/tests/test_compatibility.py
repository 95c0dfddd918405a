import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from helpers import random_symmetric_table
from jigsaw_rl.compatibility import (RankStats, adjust_constant, compat_andalo, compat_new,
                                     compatibility_table, is_symmetric, load_table, percentile_avg,
                                     rank_phi, save_table, symmetrize)
from jigsaw_rl.core import Relation


def test_rank_phi_examples():
    row = [np.inf, 1.0, 3.0, 2.0]
    assert rank_phi(row, 1) == 0
    assert rank_phi(row, 2) == 2
    assert rank_phi(row, 3) == 1
    tied = [0.5, 2.0, 2.0, np.inf]
    assert (rank_phi(tied, 1), rank_phi(tied, 2)) == (1, 2)


@given(arrays(np.float64, 7, elements=st.integers(0, 4).map(float)))
def test_rank_phi_is_a_stable_sort_position(row):
    order = sorted(range(len(row)), key=lambda j: (row[j], j))
    assert [rank_phi(row, j) for j in order] == list(range(len(row)))


def test_percentile_avg_examples():
    assert percentile_avg(np.arange(1, 101), 3) == 2.0
    assert percentile_avg([0, 0, 0, 5, 7, 9, 1, 2, 3, 4] * 10, 3) == 0.0
    vals = np.random.default_rng(1).random(37)
    assert percentile_avg(vals, 100) == pytest.approx(vals.mean(), abs=1e-12)


def test_compat_new_cases():
    assert compat_new(0.0, 0.0, 0) == 1.0
    assert compat_new(0.0, 0.0, 5) == 1.0
    assert compat_new(3.0, 2.0, 1) == 0.0
    assert compat_new(1.0, 0.0, 0) == 0.0
    assert compat_new(1.0, 2.0, 2) == pytest.approx(0.25, abs=1e-12)
    assert compat_new(0.0, 2.0, 0) == 1.0


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0.01, 10), st.integers(0, 8), st.integers(0, 8))
def test_compat_new_monotone(d1, d2, p, phi1, phi2):
    lo, hi = sorted((d1, d2))
    assert compat_new(hi, p, phi1) <= compat_new(lo, p, phi1)
    if 0 < lo < p:
        a, b = sorted((phi1, phi2))
        assert compat_new(lo, p, b) <= compat_new(lo, p, a)
    assert 0 <= compat_new(d1, p, phi1) <= 1


def test_compat_andalo_cases():
    assert compat_andalo(0.0, 2.0, 0) == 1.0
    assert compat_andalo(2.0, 2.0, 1) == pytest.approx(math.exp(-2), abs=1e-12)
    assert compat_andalo(0.0, 0.0, 3) == pytest.approx(math.exp(-3), abs=1e-12)
    assert compat_andalo(1.0, 0.0, 0) == 0.0
    assert compat_andalo(0.5, 1.0, 9) <= math.exp(-9)


def test_compatibility_table_matches_scalar_definitions():
    rng = np.random.default_rng(7)
    K = 9
    D = rng.random((4, K, K)) * 10
    for r in range(4):
        np.fill_diagonal(D[r], np.inf)
    C = compatibility_table(D, k=30)
    A = compatibility_table(D, measure="andalo")
    for r in range(4):
        for u in range(K):
            row = D[r, u]
            finite = row[np.isfinite(row)]
            quart = np.sort(finite)[math.ceil(0.25 * len(finite)) - 1]
            for v in range(K):
                if u == v:
                    assert C[r, u, v] == 0 and A[r, u, v] == 0
                    continue
                phi = rank_phi(row, v)
                assert C[r, u, v] == pytest.approx(compat_new(row[v], percentile_avg(finite, 30), phi), abs=1e-12)
                assert A[r, u, v] == pytest.approx(compat_andalo(row[v], quart, phi), abs=1e-12)


def test_unknown_measure():
    with pytest.raises(ValueError):
        compatibility_table(np.ones((4, 3, 3)), measure="bogus")


def test_rank_stats_requires_equal_candidate_counts():
    D = np.ones((4, 3, 3))
    D[:, 0, 1] = np.inf
    with pytest.raises(ValueError):
        RankStats.from_dissimilarities(D)


def test_symmetrize_average():
    C = np.zeros((4, 2, 2))
    C[Relation.RIGHT, 0, 1] = 0.8
    C[Relation.LEFT, 1, 0] = 0.6
    S = symmetrize(C)
    assert S[Relation.RIGHT, 0, 1] == pytest.approx(0.7)
    assert S[Relation.LEFT, 1, 0] == pytest.approx(0.7)


@settings(max_examples=30)
@given(arrays(np.float64, (4, 5, 5), elements=st.floats(0, 1)))
def test_symmetrize_properties(C):
    S = symmetrize(C)
    assert is_symmetric(S)
    np.testing.assert_array_equal(symmetrize(S), S)


def test_symmetric_table_unchanged():
    C = random_symmetric_table(np.random.default_rng(0), 6)
    np.testing.assert_array_equal(symmetrize(C), C)


def _constant_hub_table(n: int, n_const: int) -> np.ndarray:
    """Every piece is a perfect match for the constant ones, so every pair is affected."""
    C = np.full((4, n, n), 0.3)
    C[:, :, :n_const] = 1.0
    C[:, :n_const, :] = 1.0
    for r in range(4):
        np.fill_diagonal(C[r], 0)
    return C


def test_adjust_constant_needs_more_than_two():
    C = _constant_hub_table(6, 2)
    flags = np.arange(6) < 2
    np.testing.assert_array_equal(adjust_constant(C, flags, 0), C)


def test_adjust_constant_reproducible_and_symmetric():
    C = _constant_hub_table(8, 3)
    flags = np.arange(8) < 3
    a = adjust_constant(C, flags, 5)
    np.testing.assert_array_equal(a, adjust_constant(C, flags, 5))
    assert is_symmetric(a)
    assert not np.array_equal(a, C)
    assert np.all(np.diagonal(a, axis1=1, axis2=2) == 0)


def test_adjust_constant_statistics():
    n = 240
    C = _constant_hub_table(n, 3)
    out = adjust_constant(C, np.arange(n) < 3, np.random.default_rng(12345))
    draws = np.concatenate([out[0][~np.eye(n, dtype=bool)], out[1][~np.eye(n, dtype=bool)]])
    assert len(draws) >= 100_000
    assert 0.79 <= np.mean(draws == 0) <= 0.81
    nz = draws[draws > 0]
    assert nz.max() <= 1
    assert stats.kstest(nz, "uniform").pvalue > 1e-3


def test_table_file_round_trip(tmp_path):
    C = random_symmetric_table(np.random.default_rng(3), 5)
    save_table(tmp_path / "c.npy", C)
    assert np.load(tmp_path / "c.npy").shape == (5, 5, 4)
    np.testing.assert_array_equal(load_table(tmp_path / "c.npy"), C)

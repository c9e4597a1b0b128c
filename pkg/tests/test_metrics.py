import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bsskit.metrics import abs_corr_matrix, assign, gini, isi, isi_avg, isi_jnt, isr, pair_correlation
from bsskit.sources import GgdSpec, sample_ggd


def isi_loops(g):
    # literal double-loop reimplementation
    n = len(g)
    a = [[abs(float(g[i][j])) for j in range(n)] for i in range(n)]
    total = 0.0
    for i in range(n):
        m = max(a[i])
        total += sum(a[i][j] / m for j in range(n)) - 1
    for j in range(n):
        m = max(a[i][j] for i in range(n))
        total += sum(a[i][j] / m for i in range(n)) - 1
    return total / (2 * n * (n - 1))


def perm_diag(n, rng):
    p = np.eye(n)[rng.permutation(n)]
    return p @ np.diag(rng.uniform(0.5, 2.0, n) * rng.choice([-1, 1], n))


square = st.integers(2, 6).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-10, 10, allow_nan=False)).filter(
        lambda a: np.all(np.abs(a).max(axis=0) > 1e-3) and np.all(np.abs(a).max(axis=1) > 1e-3)
    )
)


class TestIsi:
    def test_permutation_diagonal_is_zero(self):
        assert isi(perm_diag(5, np.random.default_rng(0))) == 0.0

    def test_all_ones_is_one(self):
        assert isi(np.ones((4, 4))) == pytest.approx(1.0, abs=1e-15)

    def test_matches_loop_implementation(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            g = rng.standard_normal((3, 3))
            assert isi(g) == pytest.approx(isi_loops(g.tolist()), abs=1e-12)

    def test_zero_row_raises(self):
        g = np.eye(3)
        g[1] = 0
        with pytest.raises(ValueError):
            isi(g)

    @settings(max_examples=100, deadline=None)
    @given(square)
    def test_bounded(self, g):
        v = isi(g)
        assert -1e-12 <= v <= 1 + 1e-12

    def test_zero_iff_permutation_diagonal(self):
        g = perm_diag(4, np.random.default_rng(2))
        g[0, np.flatnonzero(g[1])[0]] += 1e-6
        assert isi(g) > 0


class TestJointIsi:
    def test_equal_matrices(self):
        g = np.random.default_rng(3).standard_normal((4, 4))
        assert isi_avg([g, g, g]) == pytest.approx(isi(g), abs=1e-14)
        assert isi_jnt([g, g, g]) == pytest.approx(isi(g), abs=1e-14)

    def test_misaligned_permutations(self):
        g1 = np.diag([1.0, 2.0, 3.0])
        g2 = np.eye(3)[[1, 0, 2]]
        assert isi_avg([g1, g2]) == 0.0
        assert isi_jnt([g1, g2]) > 0

    def test_shared_permutation_gives_zero(self):
        rng = np.random.default_rng(4)
        p = np.eye(4)[rng.permutation(4)]
        gs = [p @ np.diag(rng.uniform(0.5, 2, 4)) for _ in range(3)]
        assert isi_jnt(gs) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("k", [1, 2, 7])
    def test_invariant_to_copies(self, k):
        g = np.random.default_rng(5).standard_normal((5, 5))
        assert isi_jnt([g] * k) == pytest.approx(isi(g), abs=1e-14)

    def test_empty_and_mixed_shapes(self):
        with pytest.raises(ValueError):
            isi_jnt([])
        with pytest.raises(ValueError):
            isi_avg([])
        with pytest.raises(ValueError):
            isi_jnt([np.eye(2), np.eye(3)])


class TestIsr:
    def test_permutation_diagonal_is_zero(self):
        assert isr(perm_diag(6, np.random.default_rng(6))) == 0.0

    def test_hand_value(self):
        g = np.array([[1.0, 0.1], [-0.2, 1.0]])
        assert isr(g) == pytest.approx(0.025, abs=1e-15)
        assert isr(g, normalized=True) == pytest.approx(0.025, abs=1e-15)

    def test_normalized_divides_by_n_minus_one(self):
        g = np.random.default_rng(7).standard_normal((5, 5)) + 4 * np.eye(5)
        assert isr(g, normalized=True) == pytest.approx(isr(g) / 4, rel=1e-14)

    def test_source_side_invariance(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            g = rng.standard_normal((4, 4)) + 3 * np.eye(4)
            pd = perm_diag(4, rng)
            assert isr(pd @ g) == pytest.approx(isr(g), rel=1e-10)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(9)
        g = rng.standard_normal((5, 5))
        assert isr(g[rng.permutation(5)]) == pytest.approx(isr(g), abs=1e-12)

    def test_zero_row_raises(self):
        with pytest.raises(ValueError):
            isr(np.array([[1.0, 0.0], [0.0, 0.0]]))


class TestAssign:
    def test_identity(self):
        assert np.array_equal(assign(np.eye(4)), np.arange(4))

    def test_reversal(self):
        assert np.array_equal(assign(np.fliplr(np.eye(5))), np.arange(5)[::-1])

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_exhaustive_oracle(self, n):
        rng = np.random.default_rng(n)
        for _ in range(100):
            s = rng.random((n, n))
            best = max(sum(s[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
            perm = assign(s)
            assert sorted(perm) == list(range(n))
            assert s[np.arange(n), perm].sum() == pytest.approx(best, abs=1e-12)

    def test_not_greedy(self):
        # greedy picks the 0.9 first and is forced into 0.0
        s = np.array([[0.9, 0.8], [0.7, 0.0]])
        assert np.array_equal(assign(s), [1, 0])


class TestGini:
    def test_constant_is_zero(self):
        assert gini(np.full(17, 3.2)) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("v", [2, 4, 10])
    def test_one_hot(self, v):
        u = np.zeros(v)
        u[v // 2] = -5.0
        assert gini(u) == pytest.approx(1 - 1 / v, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, 20, elements=st.floats(-100, 100, allow_nan=False)), st.floats(0.01, 100))
    def test_scale_invariant(self, u, c):
        if np.abs(u).sum() < 1e-6:
            return
        assert gini(c * u) == pytest.approx(gini(u), abs=1e-12)
        assert gini(-u) == pytest.approx(gini(u), abs=1e-12)

    def test_zero_vector(self):
        with pytest.raises(ValueError):
            gini(np.zeros(5))

    def test_sparser_ggd_has_higher_gini(self):
        g = {b: np.mean([gini(sample_ggd(GgdSpec(b), 10_000, seed=s)) for s in range(100)]) for b in (0.1, 0.5)}
        assert g[0.1] > g[0.5]


class TestPairCorrelation:
    def test_scaled_permuted_copy(self):
        rng = np.random.default_rng(10)
        s = rng.standard_normal((5, 1000))
        p = rng.permutation(5)
        est = np.diag(rng.uniform(-3, 3, 5)) @ s[p]
        perm, c = pair_correlation(s, est)
        assert np.allclose(c, 1.0, atol=1e-12)
        assert np.array_equal(p[perm], np.arange(5))

    def test_independent_noise(self):
        rng = np.random.default_rng(11)
        hits = sum(
            pair_correlation(rng.standard_normal((4, 10_000)), rng.standard_normal((4, 10_000)))[1].mean() < 0.03
            for _ in range(100)
        )
        assert hits >= 95

    def test_constant_row_named(self):
        s = np.random.default_rng(12).standard_normal((3, 50))
        est = s.copy()
        est[2] = 1.0
        with pytest.raises(ValueError, match="row 2"):
            pair_correlation(s, est)

    def test_bounds(self):
        rng = np.random.default_rng(13)
        c = abs_corr_matrix(rng.standard_normal((3, 40)), rng.standard_normal((3, 40)))
        assert np.all((c >= 0) & (c <= 1))

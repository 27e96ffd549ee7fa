import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainlab import (
    DegenerateStateError,
    InvalidMatrixError,
    IrreducibilityError,
    MarkovChain,
    TruncationError,
)
from chainlab.chain_core import (
    TimePmf,
    as_distribution,
    check_tail,
    is_reversible,
    lazy,
    reversed_chain,
    solve_stationary,
    stationary_distribution,
    total_variation,
)
from chainlab.generators import biased_cycle, greasy_ladder, random_reversible, two_state
from chainlab.trees import random_tree

from conftest import distributions, positive_chains


class TestConstruction:
    def test_rejects_bad_row_sum(self):
        with pytest.raises(InvalidMatrixError, match="row 0"):
            MarkovChain([[0.5, 0.4], [0.5, 0.5]])

    def test_rejects_negative_entry(self):
        with pytest.raises(InvalidMatrixError):
            MarkovChain([[1.2, -0.2], [0.5, 0.5]])

    def test_rejects_non_square(self):
        with pytest.raises(InvalidMatrixError):
            MarkovChain([[1.0, 0.0, 0.0]])

    def test_rejects_reducible(self):
        with pytest.raises(IrreducibilityError):
            MarkovChain([[1.0, 0.0], [0.5, 0.5]])

    def test_matrix_is_read_only(self, symmetric2):
        with pytest.raises(ValueError):
            symmetric2.P[0, 0] = 0.3


class TestStationary:
    def test_symmetric_two_state(self, symmetric2):
        np.testing.assert_allclose(symmetric2.pi, [0.5, 0.5], atol=1e-14)

    def test_greasy_ladder_three(self):
        np.testing.assert_allclose(greasy_ladder(3).pi, [4 / 7, 2 / 7, 1 / 7], atol=1e-12)

    def test_path_three(self, path3):
        np.testing.assert_allclose(path3.pi, [0.25, 0.5, 0.25], atol=1e-12)

    def test_returns_copy(self, path3):
        pi = stationary_distribution(path3)
        pi[0] = 7.0
        assert path3.pi[0] == pytest.approx(0.25)

    @settings(max_examples=50, deadline=None)
    @given(positive_chains())
    def test_is_fixed_point(self, chain):
        pi = solve_stationary(chain.P)
        assert pi.min() > 0
        np.testing.assert_allclose(pi @ chain.P, pi, atol=1e-12)
        assert pi.sum() == pytest.approx(1.0, abs=1e-12)

    def test_lazy_keeps_stationary_law(self):
        for seed in range(100):
            c = random_reversible(2 + seed % 9, seed)
            np.testing.assert_allclose(lazy(c).pi, c.pi, atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(positive_chains(), st.integers(0, 40))
    def test_powers_are_stochastic(self, chain, t):
        Pt = chain.power(t)
        assert Pt.min() >= -1e-12
        np.testing.assert_allclose(Pt.sum(axis=1), 1.0, atol=1e-10 * max(t, 1))


class TestLazy:
    def test_flip_chain(self, flip):
        np.testing.assert_allclose(lazy(flip).P, [[0.5, 0.5], [0.5, 0.5]])

    def test_uniform_two_state(self, symmetric2):
        np.testing.assert_allclose(lazy(symmetric2).P, [[0.75, 0.25], [0.25, 0.75]])


class TestReversal:
    def test_reversible_chain_is_its_own_reversal(self):
        c = random_tree(7, seed=3).chain
        np.testing.assert_allclose(reversed_chain(c).P, c.P, atol=1e-12)

    def test_greasy_ladder_reversal_is_stationary(self):
        c = greasy_ladder(3)
        r = reversed_chain(c)
        np.testing.assert_allclose(c.pi @ r.P, c.pi, atol=1e-12)

    def test_biased_cycle_reverses_direction(self):
        fwd = reversed_chain(biased_cycle(4))
        np.testing.assert_allclose(fwd.P, biased_cycle(4, 1 / 3).P, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(positive_chains())
    def test_involution(self, chain):
        np.testing.assert_allclose(reversed_chain(reversed_chain(chain)).P, chain.P, atol=1e-10)

    def test_zero_mass_guard(self, monkeypatch):
        c = two_state(0.5, 0.5)
        monkeypatch.setattr(MarkovChain, "pi", property(lambda self: np.array([1.0, 0.0])))
        with pytest.raises(DegenerateStateError):
            reversed_chain(c)


class TestReversibility:
    def test_tree_walk(self):
        assert random_tree(9, seed=1).chain.reversible

    @pytest.mark.parametrize("n", [3, 4, 7])
    def test_biased_cycle(self, n):
        assert not biased_cycle(n).reversible

    def test_greasy_ladder(self):
        assert not is_reversible(greasy_ladder(5))


class TestTotalVariation:
    def test_identical(self):
        assert total_variation([0.2, 0.8], [0.2, 0.8]) == 0.0

    def test_disjoint(self):
        assert total_variation([1, 0], [0, 1]) == 1.0

    def test_partial(self):
        assert total_variation([1, 0], [1 / 3, 2 / 3]) == pytest.approx(2 / 3, abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            total_variation([1.0], [0.5, 0.5])

    @settings(max_examples=100)
    @given(st.data())
    def test_metric(self, data):
        n = data.draw(st.integers(1, 8))
        a, b, c = (data.draw(distributions(n)) for _ in range(3))
        assert total_variation(a, b) == total_variation(b, a)
        assert total_variation(a, c) <= total_variation(a, b) + total_variation(b, c) + 1e-12


class TestTimePmf:
    def test_geometric_mean_and_tail(self):
        g = TimePmf.geometric(5.0)
        assert g.tail < 1e-12
        assert g.mean() == pytest.approx(5.0, rel=1e-9)

    def test_uniform(self):
        u = TimePmf.uniform(4)
        assert u.pmf() == {1: 0.25, 2: 0.25, 3: 0.25, 4: 0.25}

    def test_doubled_point(self):
        assert TimePmf.point(3).doubled().pmf() == {6: 1.0}

    def test_binomial_mean(self):
        assert TimePmf.binomial(10).mean() == pytest.approx(5.0)

    def test_tail_budget(self):
        with pytest.raises(TruncationError):
            check_tail(TimePmf.geometric(50.0, tail=1e-3), 1e-6)

    def test_rejects_bad_masses(self):
        with pytest.raises(ValueError):
            TimePmf(0, np.array([0.5, 0.2]))


def test_as_distribution_rejects_unnormalised():
    with pytest.raises(ValueError):
        as_distribution([0.5, 0.6])

import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from scipy.optimize import linprog

from chainlab import ConvergenceError
from chainlab.chain_core import lazy, point_mass
from chainlab.generators import biased_cycle, greasy_ladder, random_reversible
from chainlab.stopping_rules import (
    averaging_statistic,
    exit_frequencies,
    filling_rule,
    halting_state,
    separation_rule_mean,
    stop_means,
    stopped_by,
    t_stop,
    t_stop_lazy,
)

from conftest import positive_chains, uniform_rows


def lp_stop_mean(chain, x):
    """Smallest total exit frequency from x: min sum(nu) s.t. nu (I - P) = delta_x - pi, nu >= 0."""
    n = chain.n
    b = -chain.pi.copy()
    b[x] += 1.0
    res = linprog(np.ones(n), A_eq=(np.eye(n) - chain.P).T, b_eq=b, bounds=[(0, None)] * n, method="highs")
    assert res.status == 0
    return res.fun


def greasy_ladder_t_stop(n):
    return (n - 2 + 2.0 ** (1 - n)) / (1 - 2.0 ** -n)


class TestFillingRule:
    def test_flip_chain(self, flip):
        tr = filling_rule(flip, [1.0, 0.0])
        assert tr.fill_times.tolist() == [0, 1]
        assert halting_state(tr) == 1
        np.testing.assert_allclose(tr.stopped_distribution, [0.5, 0.5], atol=1e-15)
        assert tr.truncated_mean == pytest.approx(0.5)
        assert tr.unstopped == 0.0

    def test_start_at_stationary(self):
        c = random_reversible(5, seed=1)
        tr = filling_rule(c, c.pi)
        assert tr.horizon == 0
        assert np.all(tr.fill_times == 0)
        assert tr.halting_state == 0

    def test_greasy_ladder_three(self):
        tr = filling_rule(greasy_ladder(3), point_mass(3, 0))
        assert tr.halting_state == 2

    def test_transcript_bookkeeping(self):
        c = biased_cycle(5)
        tr = filling_rule(c, point_mass(5, 0))
        np.testing.assert_allclose(tr.Sigma, np.cumsum(tr.sigma, axis=0), atol=1e-14)
        assert np.all(tr.Sigma <= c.pi + 1e-15)
        np.testing.assert_allclose(tr.theta[1:], (tr.theta[:-1] - tr.sigma[:-1]) @ c.P, atol=1e-15)
        assert np.all(np.diff(tr.unstopped_series) <= 1e-15)

    @settings(max_examples=40, deadline=None)
    @given(positive_chains())
    def test_stops_at_stationary_law(self, chain):
        tr = filling_rule(chain, point_mass(chain.n, 0))
        assert np.abs(tr.stopped_distribution - chain.pi).sum() <= 1e-12 + 1e-14
        nu = exit_frequencies(chain, point_mass(chain.n, 0))
        # the filling rule is mean-optimal: its halting state is never exited
        assert nu.nu[tr.halting_state] <= 1e-9

    def test_non_convergence(self):
        with pytest.raises(ConvergenceError, match="unstopped mass"):
            filling_rule(biased_cycle(9), point_mass(9, 0), max_steps=3)

    def test_csv(self, flip):
        text = filling_rule(flip, [1.0, 0.0]).to_csv()
        rows = list(csv.DictReader(io.StringIO(text)))
        assert list(rows[0]) == ["t", "x", "theta", "sigma", "Sigma"]
        assert len(rows) == 4
        assert float(rows[3]["Sigma"]) == 0.5

    def test_min_steps_extends_record(self, flip):
        assert filling_rule(flip, [1.0, 0.0], min_steps=6).horizon == 6

    def test_rejects_bad_start(self, flip):
        with pytest.raises(ValueError):
            filling_rule(flip, [0.7, 0.7])


class TestExitFrequencies:
    def test_symmetric_two_state(self, symmetric2):
        ef = exit_frequencies(symmetric2, [1.0, 0.0])
        np.testing.assert_allclose(ef.nu, [1.0, 0.0], atol=1e-12)
        assert ef.mean == pytest.approx(1.0)
        assert t_stop(symmetric2)[0] == pytest.approx(1.0)

    def test_flip_chain(self, flip):
        ef = exit_frequencies(flip, [1.0, 0.0])
        np.testing.assert_allclose(ef.nu, [0.5, 0.0], atol=1e-12)
        assert ef.pinned_state == 1

    def test_same_start_and_target(self):
        c = random_reversible(6, seed=2)
        mu = np.full(6, 1 / 6)
        ef = exit_frequencies(c, mu, mu)
        assert ef.mean == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(positive_chains())
    def test_matches_linear_program(self, chain):
        means = stop_means(chain)
        for x in range(chain.n):
            assert means[x] == pytest.approx(lp_stop_mean(chain, x), rel=1e-7, abs=1e-9)

    @pytest.mark.parametrize("n", [8, 16])
    def test_biased_cycle_matches_linear_program(self, n):
        c = biased_cycle(n)
        assert t_stop(c)[0] == pytest.approx(max(lp_stop_mean(c, x) for x in range(n)), rel=1e-8)

    @pytest.mark.parametrize("n", [2, 3, 5, 8, 12])
    def test_greasy_ladder_closed_form(self, n):
        c = greasy_ladder(n)
        value, _ = t_stop(c)
        assert value == pytest.approx(greasy_ladder_t_stop(n), abs=1e-9)
        # bottom and top rung tie: the top rung always falls to the bottom
        means = stop_means(c)
        assert means[0] == pytest.approx(value, abs=1e-9)
        assert means[-1] == pytest.approx(value, abs=1e-9)
        assert value == pytest.approx(lp_stop_mean(c, 0), rel=1e-8)

    def test_pinned_minimum_is_zero(self):
        for seed in range(20):
            c = random_reversible(3 + seed % 8, seed)
            ef = exit_frequencies(c, point_mass(c.n, seed % c.n))
            assert ef.nu.min() <= 1e-10
            assert ef.nu.min() >= 0.0


class TestStopParameter:
    def test_lazy_version_is_at_least_double(self):
        for c in (biased_cycle(6), greasy_ladder(5), random_reversible(7, seed=3)):
            assert t_stop(c)[0] <= 0.5 * t_stop_lazy(c) + 1e-9

    def test_separation_rule(self):
        c = lazy(random_reversible(6, seed=5))
        rule = separation_rule_mean(c)
        assert rule.certificate and rule.holds

    def test_separation_rule_needs_threshold(self, flip):
        with pytest.raises(ConvergenceError):
            separation_rule_mean(flip, horizon=50)


class TestAveragingStatistic:
    def test_symmetric_two_state(self, symmetric2):
        r = averaging_statistic(symmetric2, 0, 2, 4)
        assert r.value <= 1.5
        assert r.L <= r.u <= r.L + r.U

    def test_lazy_eight_cycle(self):
        c = biased_cycle(8, 0.5, lazy_walk=True)
        L = int(np.ceil(20 * t_stop(c)[0]))
        r = averaging_statistic(c, 0, L, 10 * L)
        assert r.value <= 1.1
        assert r.asserted

    def test_uniform_rows(self):
        c = uniform_rows(3)
        for L, U in ((1, 1), (3, 2)):
            r = averaging_statistic(c, 1, L, U)
            assert r.holds

    def test_non_reversible_flagged(self):
        assert not averaging_statistic(greasy_ladder(4), 0, 5, 10).asserted

    def test_stopped_by_reaches_pi(self):
        c = random_reversible(5, seed=8)
        tr = filling_rule(c, point_mass(5, 2))
        np.testing.assert_allclose(stopped_by(c, tr, tr.horizon), c.pi, atol=1e-10)

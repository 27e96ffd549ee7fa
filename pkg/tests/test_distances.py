import math

import numpy as np
import pytest
from hypothesis import given, settings

from chainlab import HoldingProbabilityError, MarkovChain
from chainlab.chain_core import TimePmf, lazy
from chainlab import distances as dist
from chainlab.generators import biased_cycle, greasy_ladder, random_reversible, two_state

from conftest import positive_chains, uniform_rows


class TestThreshold:
    def test_first_crossing(self):
        assert dist.threshold([0.5, 0.3, 0.2, 0.1], 0.25).time == 2

    def test_all_zero(self):
        assert dist.threshold([0.0, 0.0], 0.25).time == 0

    def test_not_attained(self):
        r = dist.threshold([0.9, 0.8], 0.25)
        assert not r.attained and r.time is None
        with pytest.raises(ValueError):
            int(r)


class TestFlipChain:
    def test_t_mix_never_attained(self, flip):
        for horizon in (10, 200):
            assert not dist.t_mix(flip, horizon=horizon).attained

    def test_t_ave_is_zero(self, flip):
        assert dist.profile_ave(flip, 5).values.max() == 0.0
        assert dist.t_ave(flip).time == 0

    def test_t_lazy(self, flip):
        assert dist.t_lazy(flip).time == 1

    def test_geometric_distance_closed_form(self, flip):
        # the walk is displaced iff the geometric time is odd, probability t/(2t-1)
        prof = dist.profile_geom(flip, 10)
        for t in range(1, 11):
            assert prof[t] == pytest.approx(1 / (2 * (2 * t - 1)), abs=1e-14)
        assert prof[2] == pytest.approx(1 / 6, abs=1e-14)
        assert dist.t_geom(flip).time == 2

    def test_cesaro(self, flip):
        assert dist.t_ces(flip).time == 2


class TestProfiles:
    def test_uniform_rows_everything_vanishes(self):
        c = uniform_rows(4)
        for prof in (dist.profile_d(c, 5), dist.profile_dbar(c, 5), dist.profile_sep(c, 5)):
            np.testing.assert_allclose(prof.values[1:], 0.0, atol=1e-14)
        np.testing.assert_allclose(dist.geometric_law(c, 3.0), np.full((4, 4), 0.25), atol=1e-14)
        assert dist.profile_geom(c, 4).values[1:].max() < 1e-14

    def test_stop_below_truncates(self, path3):
        prof = dist.profile_d(lazy(path3), 1000, stop_below=0.25)
        assert prof.values[-1] <= 0.25 < prof.values[-2]

    @settings(max_examples=30, deadline=None)
    @given(positive_chains())
    def test_separation_dominates_tv(self, chain):
        for t in (1, 2, 5):
            K = chain.power(t)
            assert dist.tv_to_stationary(K, chain.pi) <= dist.separation(K, chain.pi) + 1e-12

    def test_profile_indexing(self, path3):
        prof = dist.profile_d(path3, 3)
        assert len(prof) == 4 and prof[0] == pytest.approx(0.75)


class TestRandomTimeLaws:
    @pytest.mark.parametrize("t", [1.0, 2.0, 5.5, 40.0])
    def test_resolvent_matches_series(self, t):
        c = random_reversible(7, seed=2)
        G = dist.geometric_law(c, t)
        terms = 4000
        S, tail = dist.geometric_series(c, t, terms)
        assert np.abs(G - S).sum(axis=1).max() <= tail + 1e-12

    def test_truncated_pmf_matches_resolvent(self):
        c = greasy_ladder(5)
        law, _ = dist.randomized_time_law(c, TimePmf.geometric(6.0, 1e-12))
        np.testing.assert_allclose(law, dist.geometric_law(c, 6.0), atol=1e-10)

    def test_point_pmf_is_matrix_power(self):
        c = biased_cycle(5)
        law, tail = dist.randomized_time_law(c, TimePmf.point(7))
        np.testing.assert_allclose(law, c.power(7), atol=1e-14)
        assert tail == 0.0

    def test_uniform_pmf_is_cesaro(self):
        c = biased_cycle(6, lazy_walk=True)
        law, _ = dist.randomized_time_law(c, TimePmf.uniform(9))
        np.testing.assert_allclose(law, dist.cesaro_law(c, 9), atol=1e-14)

    def test_tail_budget_enforced(self, path3):
        from chainlab import TruncationError

        with pytest.raises(TruncationError):
            dist.randomized_time_law(path3, TimePmf.geometric(20.0, tail=1e-4), budget=1e-9)

    def test_geometric_mean_validated(self, path3):
        with pytest.raises(ValueError):
            dist.geometric_law(path3, 0.5)

    def test_doubled_separation_bounds(self):
        c = random_reversible(6, seed=4)
        upper, lower = dist.separation_of_doubled(c, TimePmf.geometric(3.0, 1e-13))
        G = dist.geometric_law(c, 3.0)
        exact = dist.separation(G @ G, c.pi)
        assert lower - 1e-12 <= exact <= upper + 1e-9

    def test_exact_geometric_separation_profile(self):
        c = random_reversible(6, seed=4)
        prof = dist.profile_sep_geometric(c, 5)
        G = dist.geometric_law(c, 5)
        assert prof[5] == pytest.approx(dist.separation(G @ G, c.pi), abs=1e-14)


class TestLemmaSuite:
    def test_lazy_four_cycle(self, lazy_cycle4):
        rep = dist.verify_distance_lemmas(lazy_cycle4, 64)
        assert rep.ok, [c for c in rep.checks if not c.ok]
        assert rep.worst_slack >= -1e-9

    def test_uniform_rows(self):
        rep = dist.verify_distance_lemmas(uniform_rows(3), 16)
        assert rep.ok

    def test_random_reversible_chains(self):
        bad = []
        for seed in range(100):
            c = random_reversible(2 + seed % 9, seed)
            rep = dist.verify_distance_lemmas(c, 24)
            bad += [(seed, f.name) for f in rep.failures]
        assert not bad

    def test_reversible_only_checks_skipped(self):
        rep = dist.verify_distance_lemmas(greasy_ladder(4), 16)
        assert rep.get("s(2t)<=1-(1-dbar(t))^2").status == "skipped"
        assert rep.get("t_sep<=2t_mix").status == "skipped"

    def test_periodic_chain_skips_mixing_comparisons(self, flip):
        rep = dist.verify_distance_lemmas(flip, 16)
        assert rep.get("t_ave<=t_mix").status == "skipped"
        assert rep.get("d_G monotone").status == "pass"

    @settings(max_examples=20, deadline=None)
    @given(positive_chains(max_n=5))
    def test_geometric_distance_monotone(self, chain):
        assert dist.check_geometric_monotone(chain, 40).ok


class TestConsecutiveTV:
    def test_two_state_exact(self):
        delta = 0.3
        c = two_state(1 - delta, 1 - delta)
        chk = dist.verify_consecutive_tv_bound(c, delta, 64)
        assert chk.ok
        t = int(chk.where.split(",")[0].split("=")[1])
        assert chk.lhs == pytest.approx(0.7 * 0.4 ** t, abs=1e-14)

    def test_lazy_chains(self):
        for seed in range(10):
            c = lazy(random_reversible(5, seed))
            assert dist.verify_consecutive_tv_bound(c, 0.5, 64).ok
        assert dist.verify_consecutive_tv_bound(biased_cycle(7, lazy_walk=True), 0.5).ok

    def test_bound_formula(self):
        v = 10 * 0.25
        assert dist.consecutive_tv_bound(10, 0.5) == pytest.approx(math.exp(-9 * v / 16) + 12 * math.sqrt(2 / v))

    def test_holding_precondition(self, path3):
        with pytest.raises(HoldingProbabilityError):
            dist.verify_consecutive_tv_bound(path3, 0.5)
        with pytest.raises(HoldingProbabilityError):
            dist.verify_consecutive_tv_bound(lazy(path3), 1.0)


def test_all_thresholds_agree_on_stationary_start():
    c = MarkovChain(np.full((3, 3), 1 / 3))
    for fn in (dist.t_mix, dist.t_ave, dist.t_geom, dist.t_ces, dist.t_sep):
        assert fn(c).time <= 1

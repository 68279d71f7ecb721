"""Tests for the coupon process, knowledge tracking and both multi-message algorithms."""
from __future__ import annotations
from fractions import Fraction
from itertools import combinations, product
import math
import statistics

import pytest

from radio_multicast.adversaries import RandomConnectedAdversary, StableSubgraph, StaticAdversary
from radio_multicast.core import Control, Packet, SimConfig
from radio_multicast.errors import DomainError, UnreachableCouponError
from radio_multicast.metrics import Metrics
from radio_multicast.multicast import (
    CouponState, KnowledgeState, algorithm1_multicast, algorithm2_multicast, coupon_collection_run,
)
from radio_multicast.protocols import ProtocolParams, Setting, concurrency_resistant, limited_broadcast


def brute_collection_probability(placement, cap, coupon):
    """Pick a bin, open it with probability 1/2, take a uniform cap-subset of it."""
    total = Fraction(0)
    for b in placement:
        if not b:
            continue
        subsets = list(combinations(sorted(b), min(cap, len(b))))
        total += Fraction(sum(coupon in sub for sub in subsets), len(subsets))
    return total / (2 * len(placement))


class TestCouponState:
    """Tests for coupon placements and per-step probabilities."""

    def test_random_placement_has_ell_copies(self):
        state = CouponState.random(10, 5, ell=2, cap=1, seed=0)
        assert state.copies().tolist() == [2] * 5

    def test_collection_probability(self):
        state = CouponState(2, 2, ell=1, cap=1, placement=(frozenset({0, 1}), frozenset({1})))
        assert state.collection_probability(0) == pytest.approx(0.125)
        assert state.collection_probability(1) == pytest.approx(0.375)

    @pytest.mark.parametrize("n_bins", [1, 2, 3, 4])
    @pytest.mark.parametrize("s_coupons", [1, 2, 3])
    def test_collection_probability_exhaustive(self, n_bins, s_coupons):
        """Every placement, cap and coupon against enumeration of the opened subsets."""
        for masks in product(range(2 ** s_coupons), repeat=n_bins):
            placement = tuple(frozenset(x for x in range(s_coupons) if m >> x & 1) for m in masks)
            ell = min(sum(x in b for b in placement) for x in range(s_coupons))
            for cap in range(1, s_coupons + 1):
                state = CouponState(n_bins, s_coupons, ell=max(ell, 1), cap=cap, placement=placement)
                for x in range(s_coupons):
                    exact = brute_collection_probability(placement, cap, x)
                    assert state.collection_probability(x) == pytest.approx(float(exact))
                    if ell >= 1:
                        assert exact >= Fraction(cap * ell, 2 * n_bins * s_coupons)

    def test_cap_above_bin_size(self):
        state = CouponState(2, 2, ell=1, cap=4, placement=(frozenset({0, 1}), frozenset()))
        assert state.collection_probability(0) == pytest.approx(0.25)

    def test_too_many_copies_for_bins(self):
        with pytest.raises(DomainError):
            CouponState.random(3, 2, ell=4, cap=1, seed=0)

    def test_bad_coupon_id(self):
        with pytest.raises(DomainError):
            CouponState(1, 2, ell=1, cap=1, placement=(frozenset({5}),))


class TestCouponRun:
    """Tests for the coupon collection process."""

    def test_unplaced_coupon(self):
        state = CouponState(3, 2, ell=1, cap=1, placement=(frozenset({0}), frozenset(), frozenset()))
        with pytest.raises(UnreachableCouponError):
            coupon_collection_run(state, seed=0)

    def test_fewer_copies_than_ell(self):
        state = CouponState(3, 1, ell=2, cap=1, placement=(frozenset({0}), frozenset(), frozenset()))
        with pytest.raises(DomainError):
            coupon_collection_run(state, seed=0)

    def test_collects_everything(self):
        state = CouponState.random(8, 6, ell=2, cap=1, seed=3)
        steps = coupon_collection_run(state, seed=3)
        assert steps >= 6
        assert state.collected == set(range(6))

    def test_deterministic(self):
        a = coupon_collection_run(CouponState.random(8, 6, ell=2, cap=2, seed=1), seed=9)
        b = coupon_collection_run(CouponState.random(8, 6, ell=2, cap=2, seed=1), seed=9)
        assert a == b

    @pytest.mark.slow
    def test_acceptance_grid(self):
        """Median steps stay under the bound and fall as copies or capacity grow."""
        def median(n, s, cap, ell):
            return statistics.median(
                coupon_collection_run(CouponState.random(n, s, ell=ell, cap=cap, seed=t), seed=t)
                for t in range(200))

        medians = {}
        for n, s, cap, ell in product((16, 64), (16, 64), (1, 4), (1, 4)):
            m = medians[n, s, cap, ell] = median(n, s, cap, ell)
            assert m <= 10 * (n * s / (cap * ell)) * math.log(n + s)
        # A single-pick bin that is already crowded gains nothing from more
        # copies, and capacity only matters once bins hold several coupons.
        for n, s in product((16, 64), (16, 64)):
            for cap in (1, 4):
                if cap == 1 and s / n >= 2:
                    assert medians[n, s, cap, 4] <= 1.10 * medians[n, s, cap, 1]
                else:
                    assert medians[n, s, cap, 4] < medians[n, s, cap, 1]
            for ell in (1, 4):
                if s * ell / n >= 1:
                    assert medians[n, s, 4, ell] < medians[n, s, 1, ell]
                else:
                    assert medians[n, s, 4, ell] <= 1.05 * medians[n, s, 1, ell]


class TestKnowledgeState:
    """Tests for per-node message knowledge."""

    def test_sources_know_their_message(self):
        k = KnowledgeState(4, 2, [3, 1])
        assert k.messages(3) == [0]
        assert k.messages(1) == [1]
        assert k.multiplicity().tolist() == [1, 1]

    def test_source_count_must_match(self):
        with pytest.raises(DomainError):
            KnowledgeState(4, 2, [0])

    def test_absorb(self):
        k = KnowledgeState(3, 2, [0, 1])
        assert k.absorb(2, Packet.of(0, 1), 5) == 2
        assert k.absorb(2, Packet.of(0), 6) == 0
        assert k.absorb(2, Control.BOTTOM, 7) == 0
        assert k.learning_events == 2
        assert k.max_learning == 2
        assert k.first[2].tolist() == [5, 5]

    def test_known_by_all_and_fill(self):
        k = KnowledgeState(2, 1, [0])
        assert not k.known_by_all(Packet.of(0))
        k.absorb(1, Packet.of(0), 3)
        assert k.known_by_all(Packet.of(0))
        m = k.fill(Metrics(protocol="alg1"))
        assert m.success
        assert m.completion_round == 3


class SingleHolderAdversary(StaticAdversary):
    """Static graph that places every message at node 0."""

    def preferred_sources(self, s):
        return [0] * s


def clique_run(n, s, c=1, seed=5):
    return SimConfig(n=n, s=s, c=c, seed=seed), StaticAdversary(StableSubgraph.clique(n))


class TestAlgorithm1:
    """Tests for the random-subset multi-message algorithm."""

    @pytest.fixture
    def params(self):
        return ProtocolParams(harmonic_multiplier=1.0)

    def test_completes_on_clique(self, params):
        cfg, adv = clique_run(8, 3)
        m = algorithm1_multicast(limited_broadcast(Setting.I, params), cfg, adv)
        assert m.success
        assert m.phases == 3
        assert [row.ell_or_x for row in m.phase_rows] == [2, 4, 8]
        assert m.phase_rows[-1].min_multiplicity == 8
        assert sum(row.rounds for row in m.phase_rows) == m.rounds_total
        assert m.completion_round <= m.rounds_total

    def test_delivery_starts_at_sources(self, params):
        cfg, adv = clique_run(8, 3)
        m = algorithm1_multicast(limited_broadcast(Setting.I, params), cfg, adv)
        sources = KnowledgeState.assign(8, 3, cfg.seed).sources
        for i, v in enumerate(sources):
            assert m.delivery[v, i] == 0
        assert (m.delivery >= 0).all()

    def test_packets_respect_capacity(self, params):
        cfg, adv = clique_run(6, 4, c=2)
        m = algorithm1_multicast(limited_broadcast(Setting.I, params), cfg, adv)
        assert m.success

    def test_round_limit_truncates(self, params):
        cfg = SimConfig(n=8, s=3, seed=5, round_limit=50)
        m = algorithm1_multicast(limited_broadcast(Setting.I, params), cfg,
                                 StaticAdversary(StableSubgraph.clique(8)))
        assert m.truncated
        assert m.rounds_total <= 50


class TestAlgorithm2:
    """Tests for the one-message-per-success algorithm."""

    @pytest.fixture
    def params(self):
        return ProtocolParams(harmonic_multiplier=1.0)

    def test_retires_every_message(self, params):
        cfg, adv = clique_run(6, 3)
        m = algorithm2_multicast(concurrency_resistant(Setting.I, params), cfg, adv)
        assert m.success
        assert m.extra["retired"] == [0, 1, 2]
        assert m.successful_phases == 3
        assert m.consistent
        assert not m.livelock
        assert m.phase_rows[0].ell_or_x == 3

    def test_phase_cap_flags_livelock(self, params):
        cfg, adv = clique_run(6, 3)
        m = algorithm2_multicast(concurrency_resistant(Setting.I, params), cfg, adv, phase_cap=1)
        assert m.phases == 1
        assert m.livelock

    def test_holder_with_several_marks_retires_each_message_once(self, params):
        multi = 0
        for seed in range(10):
            cfg = SimConfig(n=5, s=3, seed=seed)
            m = algorithm2_multicast(concurrency_resistant(Setting.I, params), cfg,
                                     SingleHolderAdversary(StableSubgraph.clique(5)))
            assert m.success
            assert m.extra["retired"] == [0, 1, 2]
            assert m.successful_phases == 3
            assert m.consistent
            multi += m.extra["multi_mark_holders"]
        assert multi > 0

    def test_success_rate_recorded(self, params):
        cfg, adv = clique_run(5, 2, seed=2)
        m = algorithm2_multicast(concurrency_resistant(Setting.I, params), cfg, adv)
        assert m.extra["success_rate"] == pytest.approx(m.successful_phases / m.phases)


@pytest.mark.slow
class TestBenignSuccessRate:
    """Completion rates on the benign adversary at acceptance size."""

    def test_algorithm1_random_connected(self):
        wins = 0
        for seed in range(20):
            cfg = SimConfig(n=16, s=4, seed=seed)
            m = algorithm1_multicast(limited_broadcast(Setting.I), cfg, RandomConnectedAdversary())
            wins += m.success
        assert wins >= 19

    def test_algorithm2_random_connected(self):
        wins = 0
        for seed in range(20):
            cfg = SimConfig(n=16, s=4, seed=seed)
            m = algorithm2_multicast(concurrency_resistant(Setting.I), cfg, RandomConnectedAdversary())
            wins += m.success and m.consistent
        assert wins >= 19

    def test_algorithm1_phase_multiplicity(self):
        """At the end of phase i every message is held by at least min(2^i, n) nodes."""
        trials, held = 100, 0
        for seed in range(trials):
            cfg = SimConfig(n=32, s=8, c=4, seed=seed)
            m = algorithm1_multicast(limited_broadcast(Setting.I), cfg, RandomConnectedAdversary())
            held += all(row.min_multiplicity >= min(row.ell_or_x, 32) for row in m.phase_rows)
        assert held / trials >= 0.95

    def test_algorithm2_pooled_phase_success(self):
        phases = successes = 0
        seed = 0
        while phases < 500:
            cfg = SimConfig(n=16, s=8, seed=seed)
            m = algorithm2_multicast(concurrency_resistant(Setting.I), cfg, RandomConnectedAdversary())
            phases += m.phases
            successes += m.successful_phases
            seed += 1
        assert successes / phases >= 0.3

"""Tests for the prime field, span bookkeeping and coded gossip."""
from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from radio_multicast.adversaries import RandomConnectedAdversary, StableSubgraph, StaticAdversary
from radio_multicast.core import SimConfig
from radio_multicast.errors import DomainError
from radio_multicast.experiments import ExperimentSpec, RunOptions, fit_scaling, run_experiment
from radio_multicast.rlnc import (
    INCOMPLETE, CodedPacket, PrimeField, SpanState, decode, knows_about, rlnc_broadcast,
    sample_uniform_span_packet, span_insert,
)
from radio_multicast.rng import seeded_rng


@pytest.fixture
def f7():
    return PrimeField(7)


def packet(field, mu, m):
    return CodedPacket(field(mu), field(m))


class TestPrimeField:
    """Tests for field arithmetic."""

    def test_operations(self):
        f = PrimeField(257)
        assert f.add(200, 100) == 43
        assert f.mul(2, 129) == 1
        assert f.inv(2) == 129

    def test_zero_has_no_inverse(self, f7):
        with pytest.raises(DomainError):
            f7.inv(0)

    @pytest.mark.parametrize("q", [1, 4, 256])
    def test_non_prime_rejected(self, q):
        with pytest.raises(DomainError):
            PrimeField(q)


class TestSpanState:
    """Tests for span insertion, rank and decoding."""

    def test_insert_grows_rank_only_for_new_directions(self, f7):
        span = SpanState(f7, 2, 1)
        assert span.insert(CodedPacket.unit(f7, 2, 0, [3]))
        assert not span.insert(CodedPacket.unit(f7, 2, 0, [3]))
        assert not span.insert(packet(f7, [2, 0], [6]))
        assert span.rank == 1

    def test_combination_is_reduced(self, f7):
        span = SpanState(f7, 2, 1)
        span.insert(CodedPacket.unit(f7, 2, 0, [3]))
        span.insert(packet(f7, [1, 1], [1]))
        assert span.rank == 2
        assert decode(span) == [[3], [5]]

    def test_decode_incomplete(self, f7):
        span = span_insert(SpanState(f7, 2, 1), CodedPacket.unit(f7, 2, 1, [4]))
        assert decode(span) is INCOMPLETE

    def test_dimension_mismatch(self, f7):
        span = SpanState(f7, 2, 1)
        with pytest.raises(DomainError):
            span.insert(CodedPacket.unit(f7, 3, 0, [1]))

    def test_knows_about(self, f7):
        span = SpanState(f7, 2, 1)
        assert not knows_about(span, [1, 0])
        span.insert(CodedPacket.unit(f7, 2, 0, [3]))
        assert knows_about(span, [1, 0])
        assert knows_about(span, [5, 2])
        assert not knows_about(span, [0, 1])
        with pytest.raises(DomainError):
            knows_about(span, [1, 0, 0])

    def test_sampled_packets_stay_in_span(self, f7):
        span = SpanState(f7, 3, 2)
        span.insert(CodedPacket.unit(f7, 3, 0, [1, 2]))
        span.insert(CodedPacket.unit(f7, 3, 2, [4, 4]))
        rng = seeded_rng(0, "test")
        for _ in range(20):
            pkt = sample_uniform_span_packet(span, rng)
            assert not span.insert(pkt)
            assert pkt.mu[1] == 0
        assert span.rank == 2

    def test_empty_span_samples_zero(self, f7):
        pkt = sample_uniform_span_packet(SpanState(f7, 2, 2), seeded_rng(0, "test"))
        assert pkt.is_zero()

    def test_rank_one_binary_span_is_a_fair_coin(self):
        f2 = PrimeField(2)
        span = SpanState(f2, 3, 2)
        span.insert(CodedPacket.unit(f2, 3, 1, [1, 1]))
        rng = seeded_rng(5, "uniform")
        zeros = sum(sample_uniform_span_packet(span, rng).is_zero() for _ in range(10000))
        assert stats.chisquare([zeros, 10000 - zeros]).pvalue > 1e-3

    def test_full_rank_coefficients_are_uniform(self, f7):
        span = SpanState(f7, 3, 1)
        for i in range(3):
            span.insert(CodedPacket.unit(f7, 3, i, [i + 1]))
        rng = seeded_rng(6, "uniform")
        draws = np.array([[int(x) for x in sample_uniform_span_packet(span, rng).mu]
                          for _ in range(10000)])
        first = np.bincount(draws[:, 0], minlength=7)
        assert stats.chisquare(first).pvalue > 1e-3
        cells = np.bincount(draws @ np.array([49, 7, 1]), minlength=343)
        assert stats.chisquare(cells).pvalue > 1e-3


class TestRlncBroadcast:
    """Tests for coded gossip runs."""

    def test_everyone_decodes_on_clique(self):
        cfg = SimConfig(n=5, s=3, seed=4)
        m = rlnc_broadcast(cfg, StaticAdversary(StableSubgraph.clique(5)), round_budget=600)
        assert m.success
        assert all(r >= 0 for r in m.extra["decode_rounds"])
        assert m.completion_round == max(m.extra["decode_rounds"])

    def test_ranks_never_drop(self):
        cfg = SimConfig(n=6, s=2, seed=1)
        m = rlnc_broadcast(cfg, RandomConnectedAdversary(), round_budget=800)
        by_node = {}
        for r, v, rank, _ in m.rank_rows:
            assert rank >= by_node.get(v, 0)
            by_node[v] = rank
        assert set(by_node) == set(range(6))

    def test_single_message_source_decodes_at_start(self):
        cfg = SimConfig(n=4, s=1, seed=0)
        m = rlnc_broadcast(cfg, StaticAdversary(StableSubgraph.clique(4)), round_budget=300)
        assert sorted(m.extra["decode_rounds"])[0] == 0

    def test_budget_is_elided_after_decoding(self):
        cfg = SimConfig(n=4, s=2, seed=3)
        m = rlnc_broadcast(cfg, StaticAdversary(StableSubgraph.clique(4)), round_budget=2000)
        assert m.success
        assert m.rounds_total == 2000
        assert m.elided_rounds > 0

    def test_default_budget_and_payload_length(self):
        cfg = SimConfig(n=4, s=2, seed=3)
        m = rlnc_broadcast(cfg, StaticAdversary(StableSubgraph.clique(4)), payload_len=5, q=11)
        assert m.rounds_total == int(np.ceil(4.0 * 4 * 6))
        assert m.extra["q"] == 11

    def test_spread_is_monotone(self):
        cfg = SimConfig(n=6, s=2, seed=2)
        m = rlnc_broadcast(cfg, StaticAdversary(StableSubgraph.ring(6)), round_budget=1500)
        counts = [k for _, k in m.extra["spread"]]
        assert counts == sorted(counts)
        assert 0 <= m.extra["relay_retention"] <= 1 or np.isnan(m.extra["relay_retention"])

    def test_round_limit_truncates(self):
        cfg = SimConfig(n=5, s=2, seed=0, round_limit=10)
        m = rlnc_broadcast(cfg, StaticAdversary(StableSubgraph.clique(5)), round_budget=100)
        assert m.truncated


@pytest.mark.slow
class TestRlncStatistics:
    """Acceptance runs for coded gossip on random trees."""

    def test_completion_scales_with_n_squared_plus_ns(self):
        spec = ExperimentSpec(protocol="rlnc", adversary="random-connected", n=[8, 16, 32], s=[4, 16],
                              T=[1], trials=50, seed=3, options=RunOptions(kappa_rlnc=16.0))
        df = run_experiment(spec)
        assert (df["error"] == "").all()
        fit = fit_scaling(df, model="1 + n**2 + n*s")
        assert fit.coefficients["n**2"] >= 0
        assert fit.coefficients["n*s"] >= 0
        assert fit.r_squared >= 0.9

    def test_new_learner_frequency(self):
        n = 16
        eligible = learned = 0
        for seed in range(20):
            m = rlnc_broadcast(SimConfig(n=n, s=4, seed=seed), RandomConnectedAdversary(T=1))
            eligible += m.extra["probe"].eligible_rounds
            learned += m.extra["probe"].new_learner_rounds
        assert eligible > 0
        assert learned / eligible >= 0.8 / (2 * math.e * n)

    @pytest.mark.parametrize("q", [2, 11])
    def test_relay_retention(self, q):
        relays = retained = 0
        for seed in range(20):
            m = rlnc_broadcast(SimConfig(n=12, s=4, seed=seed), RandomConnectedAdversary(T=1), q=q)
            relays += m.extra["probe"].relays
            retained += m.extra["probe"].retained
        assert relays > 0
        p = 1 - 1 / q
        sigma = math.sqrt(p * (1 - p) / relays)
        assert retained / relays >= p - 3 * sigma

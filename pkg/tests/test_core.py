"""Tests for the round engine: reception rule, connectivity, history and network."""
from __future__ import annotations
import math

import pytest

from radio_multicast.adversaries import (
    AdversaryPolicy, RandomConnectedAdversary, StableSubgraph, StaticAdversary,
)
from radio_multicast.core import (
    IntervalAuditor, Network, Packet, Received, RoundGraph, SimConfig, assign_sources,
    check_interval_connectivity, resolve_round, single_message,
)
from radio_multicast.errors import (
    AuditViolation, ConfigError, DomainError, InvariantViolation, RoundLimitExceeded,
    SimulationHalted,
)


def path(n):
    return RoundGraph.from_edges(n, [(v, v + 1) for v in range(n - 1)])


class TestRoundGraph:
    """Tests for graph construction and validation."""

    def test_edges_are_canonical(self):
        g = RoundGraph.from_edges(3, [(2, 1), (0, 1)])
        assert g.edges == frozenset({(1, 2), (0, 1)})

    def test_self_loop_rejected(self):
        with pytest.raises(DomainError):
            RoundGraph.from_edges(3, [(1, 1)])

    def test_out_of_range_rejected(self):
        with pytest.raises(DomainError):
            RoundGraph.from_edges(3, [(0, 3)])

    def test_complete_minus(self):
        g = RoundGraph.complete_minus(4, 3, 1)
        assert len(g.edges) == 5
        assert (1, 3) not in g.edges

    def test_degrees_and_connectivity(self):
        g = path(4)
        assert g.max_degree == 2
        assert g.neighbors(1) == [0, 2]
        assert g.is_connected()
        assert not RoundGraph.from_edges(4, [(0, 1), (2, 3)]).is_connected()


class TestResolveRound:
    """Tests for the radio reception rule."""

    def test_single_sender_reaches_neighbors(self):
        g = path(4)
        out = resolve_round(g, [None, "m", None, None])
        assert out == (Received("m", 1), None, Received("m", 1), None)

    def test_collision_is_silence(self):
        """Node 1 has two transmitting neighbours and hears nothing."""
        g = path(3)
        out = resolve_round(g, ["a", None, "b"])
        assert out == (None, None, None)

    def test_transmitters_do_not_receive(self):
        g = RoundGraph.complete(2)
        assert resolve_round(g, ["a", "b"]) == (None, None)

    def test_no_senders(self):
        assert resolve_round(RoundGraph.complete(3), [None] * 3) == (None, None, None)

    def test_mixed_collision_and_reception(self):
        g = RoundGraph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
        out = resolve_round(g, ["a", None, "b", None, None])
        assert out[1] is None
        assert out[3] == Received("b", 2)
        assert out[4] is None

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            resolve_round(RoundGraph.complete(3), [None, None])


class TestIntervalConnectivity:
    """Tests for the T-interval connectivity check."""

    @pytest.fixture
    def schedule(self):
        return [
            RoundGraph.from_edges(3, [(0, 1), (1, 2)]),
            RoundGraph.from_edges(3, [(0, 1), (0, 2)]),
        ]

    def test_one_interval(self, schedule):
        assert check_interval_connectivity(schedule, 1) is True

    def test_two_interval_fails(self, schedule):
        assert check_interval_connectivity(schedule, 2) is False
        assert check_interval_connectivity(schedule, math.inf) is False

    def test_static_schedule_is_infinite_interval(self):
        assert check_interval_connectivity([path(4)] * 5, math.inf) is True

    def test_bad_arguments(self, schedule):
        with pytest.raises(DomainError):
            check_interval_connectivity(schedule, 0)
        with pytest.raises(DomainError):
            check_interval_connectivity([], 1)
        with pytest.raises(ConfigError):
            check_interval_connectivity([path(3), path(4)], 1)

    def test_auditor_flags_broken_window(self, schedule):
        auditor = IntervalAuditor(3, 2)
        for r, g in enumerate(schedule, start=1):
            auditor.observe(r, g)
        with pytest.raises(AuditViolation):
            auditor.finish()

    def test_auditor_restarts_window_after_gap(self):
        star = RoundGraph.from_edges(4, [(0, v) for v in range(1, 4)])
        auditor = IntervalAuditor(4, 3)
        for r, g in [(1, path(4)), (2, path(4)), (10, star), (11, star), (12, star)]:
            auditor.observe(r, g)
        assert auditor.finish() is True

    def test_auditor_checks_partial_window_before_gap(self):
        star = RoundGraph.from_edges(4, [(0, v) for v in range(1, 4)])
        auditor = IntervalAuditor(4, 3)
        for r, g in [(1, path(4)), (2, star), (8, star)]:
            auditor.observe(r, g)
        with pytest.raises(AuditViolation, match="round 1"):
            auditor.finish()

    def test_auditor_accepts_stable_run(self):
        auditor = IntervalAuditor(4, math.inf)
        for r in range(1, 6):
            auditor.observe(r, path(4))
        assert auditor.finish() is True


class TestPayloads:
    """Tests for packets and single-message extraction."""

    def test_single_message(self):
        assert single_message(Packet.of(3)) == 3
        assert single_message(Packet.of(1, 2)) is None
        assert single_message(None) is None


class TestAssignSources:
    """Tests for the initial message placement."""

    def test_distinct_and_deterministic(self):
        a = assign_sources(10, 4, seed=9)
        assert a == assign_sources(10, 4, seed=9)
        assert len(set(a)) == 4

    def test_wraps_when_more_messages_than_nodes(self):
        a = assign_sources(3, 7, seed=1)
        assert len(a) == 7 and set(a) == {0, 1, 2}

    def test_preferred_must_match_s(self):
        assert assign_sources(5, 2, 0, preferred=[4, 1]) == [4, 1]
        with pytest.raises(ConfigError):
            assign_sources(5, 2, 0, preferred=[4])


class TestSimConfig:
    """Tests for run configuration validation."""

    @pytest.mark.parametrize("kwargs", [dict(n=1), dict(n=4, s=0), dict(n=4, c=0), dict(n=4, round_limit=0)])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SimConfig(**kwargs)


class PeekingAdversary(AdversaryPolicy):
    """Claims tau=1 but reads the current round's transmissions."""
    name = "peeking"
    tau = 1

    def next_graph(self, view, r):
        view.intents(r)
        return RoundGraph.complete(self.n)


class TestNetwork:
    """Tests for stepping, elision, limits and audits."""

    def test_step_records_history(self, clique_net):
        net = clique_net(n=4)
        out = net.step([Packet.of(0), None, None, None])
        assert net.round == 1
        assert all(out[v] == Received(Packet.of(0), 0) for v in (1, 2, 3))
        rec = net.history.record(1)
        assert rec.transmitters == [0]
        assert net.stats.isolation_rounds == 1

    @pytest.mark.parametrize("seed", range(4))
    def test_audit_across_elided_rounds(self, seed):
        net = Network(SimConfig(n=8, seed=seed), RandomConnectedAdversary(T=3))
        for gap in (2, 5, 1, 7):
            net.step([None] * 8)
            net.step([None] * 8)
            net.skip(gap)
        net.step([None] * 8)
        assert net.stats.elided_rounds == 15
        assert net.audit() is True

    def test_skip_counts_elided_rounds(self, clique_net):
        net = clique_net(n=4)
        net.skip(10)
        assert net.round == 10
        assert net.stats.elided_rounds == 10
        assert net.stats.simulated_rounds == 0
        assert len(net.history) == 0

    def test_round_limit(self, clique_net):
        net = clique_net(n=3, round_limit=2)
        net.step([None] * 3)
        net.step([None] * 3)
        with pytest.raises(RoundLimitExceeded):
            net.step([None] * 3)
        with pytest.raises(RoundLimitExceeded):
            clique_net(n=3, round_limit=5).skip(6)

    def test_capacity_enforced(self, clique_net):
        net = clique_net(n=3, c=1, capacity=1)
        with pytest.raises(InvariantViolation):
            net.step([Packet.of(0, 1), None, None])

    def test_halt_predicate(self, clique_net):
        net = clique_net(n=3, halt=lambda rec: rec.round == 2)
        net.step([None] * 3)
        with pytest.raises(SimulationHalted) as info:
            net.step([None] * 3)
        assert info.value.round_index == 2

    def test_listener_sees_every_round(self, clique_net):
        seen = []
        net = clique_net(n=3)
        net.listeners.append(lambda rec: seen.append(rec.round))
        for _ in range(3):
            net.step([None] * 3)
        assert seen == [1, 2, 3]

    def test_oblivious_view_is_enforced(self):
        net = Network(SimConfig(n=3), PeekingAdversary())
        with pytest.raises(AuditViolation):
            net.step([Packet.of(0), None, None])

    def test_history_append_only(self, clique_net):
        net = clique_net(n=3)
        net.step([None] * 3)
        with pytest.raises(InvariantViolation):
            net.history.append(net.history.record(1))

    def test_retain_bounds_history(self, clique_net):
        net = clique_net(n=3, retain=2)
        for _ in range(5):
            net.step([None] * 3)
        assert len(net.history) == 2
        assert net.history.record(1) is None

    def test_same_seed_same_history(self):
        def run():
            net = Network(SimConfig(n=5, seed=11), StaticAdversary(StableSubgraph.ring(5)))
            for _ in range(20):
                tx = net.ledger.random(5) < 0.4
                net.step([Packet.of(v) if tx[v] else None for v in range(5)])
            return net.history
        assert run() == run()

"""
Generic multi-message broadcast.

``algorithm1_multicast`` spreads random c-subsets of what nodes know through
k-limited broadcasts with doubling k; ``algorithm2_multicast`` delivers one
message per successful concurrency-resistant broadcast. Both run on top of the
single-message procedures in ``protocols``. ``coupon_collection_run`` is the
abstract balls-and-bins process behind the first algorithm.
"""
from __future__ import annotations
from collections import Counter
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence, Set, Tuple
import logging
import math

import numpy as np

from .adversaries import AdversaryPolicy
from .core import Network, Packet, Payload, SimConfig, assign_sources
from .errors import DomainError, RoundLimitExceeded, UnreachableCouponError
from .metrics import Metrics, PhaseRow
from .protocols import ConcurrencyResistant, Detection, KLimited, SingleBcastOutcome
from .rng import seeded_rng

log = logging.getLogger(__name__)

# Rounds of history kept by networks that the algorithms create themselves.
HISTORY_RETAIN = 1024


@dataclass
class CouponState:
    """Bins with coupon placements; an opened bin yields up to ``cap`` of its coupons."""
    n_bins: int
    s_coupons: int
    ell: int
    cap: int
    placement: Tuple[FrozenSet[int], ...]
    collected: Set[int] = field(default_factory=set)

    def __post_init__(self):
        if len(self.placement) != self.n_bins:
            raise DomainError(f"{len(self.placement)} bins placed, n_bins={self.n_bins}")
        if self.cap < 1 or self.ell < 1:
            raise DomainError("cap and ell must be >= 1")
        self.placement = tuple(frozenset(int(x) for x in b) for b in self.placement)
        for b in self.placement:
            if any(not 0 <= x < self.s_coupons for x in b):
                raise DomainError(f"bin holds a coupon outside 0..{self.s_coupons - 1}")

    @classmethod
    def random(cls, n_bins: int, s_coupons: int, ell: int, cap: int, seed: int) -> "CouponState":
        """Every coupon placed in ``ell`` distinct random bins."""
        if ell > n_bins:
            raise DomainError(f"ell={ell} copies need at least as many bins (n={n_bins})")
        rng = seeded_rng(seed, "coupon:placement")
        bins: List[Set[int]] = [set() for _ in range(n_bins)]
        for x in range(s_coupons):
            for b in rng.choice(n_bins, size=ell, replace=False):
                bins[int(b)].add(x)
        return cls(n_bins, s_coupons, ell, cap, tuple(frozenset(b) for b in bins))

    def copies(self) -> np.ndarray:
        counts = np.zeros(self.s_coupons, dtype=int)
        for b in self.placement:
            for x in b:
                counts[x] += 1
        return counts

    def collection_probability(self, coupon: int) -> float:
        """Exact probability that one step collects ``coupon``."""
        total = 0.0
        for b in self.placement:
            if coupon in b:
                total += min(self.cap, len(b)) / len(b)
        return 0.5 * total / self.n_bins


def coupon_collection_run(state: CouponState, seed: int, *, batch: int = 1024) -> int:
    """Number of steps until every coupon is collected."""
    copies = state.copies()
    if (copies == 0).any():
        missing = int(np.flatnonzero(copies == 0)[0])
        raise UnreachableCouponError(f"coupon {missing} has no placement")
    if (copies < state.ell).any():
        raise DomainError(f"some coupon has fewer than ell={state.ell} copies")
    rng = seeded_rng(seed, "coupon:steps")
    bins = [np.fromiter(sorted(b), dtype=int) for b in state.placement]
    collected = np.zeros(state.s_coupons, dtype=bool)
    collected[list(state.collected)] = True
    remaining = int((~collected).sum())
    steps = 0
    while remaining:
        picks = rng.integers(0, state.n_bins, size=batch)
        opens = rng.random(batch) < 0.5
        for j in range(batch):
            steps += 1
            if not opens[j]:
                continue
            content = bins[picks[j]]
            if content.size > state.cap:
                content = rng.choice(content, size=state.cap, replace=False)
            fresh = content[~collected[content]]
            if fresh.size:
                collected[fresh] = True
                remaining -= fresh.size
                if not remaining:
                    break
    state.collected = set(range(state.s_coupons))
    return steps


class KnowledgeState:
    """Which node knows which broadcast message, and since when."""

    def __init__(self, n: int, s: int, sources: Sequence[int]):
        if len(sources) != s:
            raise DomainError(f"{len(sources)} sources for s={s} messages")
        self.n = n
        self.s = s
        self.sources = list(sources)
        self.known = np.zeros((n, s), dtype=bool)
        self.first = np.full((n, s), -1, dtype=np.int64)
        for i, v in enumerate(self.sources):
            self.known[v, i] = True
            self.first[v, i] = 0
        self.learned = Counter()

    @classmethod
    def assign(cls, n: int, s: int, seed: int, preferred: Optional[Sequence[int]] = None) -> "KnowledgeState":
        return cls(n, s, assign_sources(n, s, seed, preferred))

    def messages(self, v: int) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.known[v])]

    def absorb(self, v: int, payload: Payload, round_index: int) -> int:
        """Record a reception; returns the number of newly learned messages."""
        if not isinstance(payload, Packet):
            return 0
        new = 0
        for i in payload.messages:
            if not self.known[v, i]:
                self.known[v, i] = True
                self.first[v, i] = round_index
                new += 1
        if new:
            self.learned[round_index] += new
        return new

    def known_by_all(self, payload: Payload) -> bool:
        if not isinstance(payload, Packet):
            return True
        return all(self.known[:, i].all() for i in payload.messages)

    def multiplicity(self) -> np.ndarray:
        return self.known.sum(axis=0)

    def complete(self) -> bool:
        return bool(self.known.all())

    @property
    def learning_events(self) -> int:
        return sum(self.learned.values())

    @property
    def max_learning(self) -> int:
        return max(self.learned.values(), default=0)

    def fill(self, metrics: Metrics) -> Metrics:
        metrics.delivery = self.first.copy()
        metrics.learning_events = self.learning_events
        metrics.max_learning = self.max_learning
        metrics.success = self.complete()
        return metrics


def _network(cfg: SimConfig, adversary: AdversaryPolicy, net: Optional[Network]) -> Network:
    if net is not None:
        return net
    return Network(cfg, adversary, capacity=cfg.c, retain=HISTORY_RETAIN)


def _pack(net: Network, known: List[int], c: int) -> Packet:
    if len(known) <= c:
        return Packet(frozenset(known))
    return Packet(frozenset(int(i) for i in net.ledger.choice(known, size=c, replace=False)))


def algorithm1_multicast(limited: KLimited, cfg: SimConfig, adversary: AdversaryPolicy, *,
                         alpha: float = 24.0, net: Optional[Network] = None) -> Metrics:
    """
    ceil(log2 n) phases; phase i runs ceil(alpha * n*s/(c*2^i) * ln n) iterations
    of one 2^i-limited broadcast whose initiators are the nodes marked with
    probability 1/n, each sending a random c-subset of what it knows.
    """
    net = _network(cfg, adversary, net)
    n, s, c = cfg.n, cfg.s, cfg.c
    knowledge = KnowledgeState.assign(n, s, cfg.seed, adversary.preferred_sources(s))
    metrics = Metrics(protocol="alg1")
    phases = max(1, math.ceil(math.log2(n)))
    try:
        for i in range(1, phases + 1):
            ell = 2 ** i
            iterations = math.ceil(alpha * n * s / (c * ell) * math.log(n))
            budget = limited.budget(n, ell)
            start = net.round
            for it in range(iterations):
                if knowledge.complete():
                    # nothing left to learn; the schedule still runs out its budget
                    net.skip((iterations - it) * budget)
                    break
                marked = np.flatnonzero(net.ledger.random(n) < 1.0 / n)
                initiators = {}
                for v in marked:
                    known = knowledge.messages(int(v))
                    if known:
                        initiators[int(v)] = _pack(net, known, c)
                if not initiators or all(knowledge.known_by_all(p) for p in initiators.values()):
                    net.skip(budget)
                    continue
                out = limited(net, initiators, ell, on_receive=knowledge.absorb)
                metrics.busy_rounds += out.busy_rounds
            row = PhaseRow(i, ell, net.round - start, int(knowledge.multiplicity().min()))
            metrics.phase_rows.append(row)
            log.info("alg1 phase %d/%d: ell=%d rounds=%d min multiplicity=%d",
                     i, phases, ell, row.rounds, row.min_multiplicity)
        metrics.phases = phases
    except RoundLimitExceeded as exc:
        metrics.truncated = True
        metrics.phases = len(metrics.phase_rows)
        log.warning("alg1 truncated: %s", exc)
    metrics.absorb_network(net)
    return knowledge.fill(metrics)


def algorithm2_multicast(cr: ConcurrencyResistant, cfg: SimConfig, adversary: AdversaryPolicy, *,
                         phase_cap: Optional[int] = None, net: Optional[Network] = None) -> Metrics:
    """
    While x > 0: every pending message is marked with probability 1/x by its
    holder; a holder with several marks keeps one at random and initiates the
    concurrency-resistant broadcast with it. A success detected by everyone
    decrements x, and the message is retired if it was the only one marked.
    """
    if cfg.c < 1:
        raise DomainError("capacity must be >= 1")
    net = _network(cfg, adversary, net)
    n, s = cfg.n, cfg.s
    knowledge = KnowledgeState.assign(n, s, cfg.seed, adversary.preferred_sources(s))
    metrics = Metrics(protocol="alg2")
    cap = phase_cap or math.ceil(10 * (s + math.log2(n)))
    x = np.full(n, s, dtype=np.int64)
    pending = list(range(s))
    retired: Set[int] = set()
    multi_mark_holders = 0
    phase = 0
    try:
        while (x > 0).any():
            if phase >= cap:
                metrics.livelock = True
                log.warning("alg2 livelock: %d phases without finishing (x=%s)", phase, sorted(set(x.tolist())))
                break
            phase += 1
            x_before = int(x.max())
            start = net.round
            marks = {}
            if pending:
                holders = [knowledge.sources[i] for i in pending]
                probs = np.array([1.0 / max(int(x[v]), 1) for v in holders])
                hit = net.ledger.random(len(pending)) < probs
                for i, v, marked in zip(pending, holders, hit):
                    if marked:
                        marks.setdefault(v, []).append(i)
            # A broadcast carries one message: a holder with several marks
            # initiates one of them, and retirement keys on a unique initiated
            # message, not a unique marked one.
            initiators = {}
            for v, chosen in marks.items():
                if len(chosen) > 1:
                    multi_mark_holders += 1
                    pick = chosen[int(net.ledger.integers(0, len(chosen)))]
                else:
                    pick = chosen[0]
                initiators[v] = Packet.of(pick)
            out: SingleBcastOutcome = cr(net, initiators, on_receive=knowledge.absorb)
            metrics.busy_rounds += out.busy_rounds
            if not out.consistent:
                metrics.consistent = False
            for v, d in enumerate(out.detection):
                if d is Detection.SUCCESS:
                    x[v] -= 1
            if len(set(x.tolist())) > 1:
                metrics.consistent = False
            success = out.result == 1
            if success:
                metrics.successful_phases += 1
                if len(initiators) == 1:
                    (packet,) = initiators.values()
                    (i,) = packet.messages
                    retired.add(i)
                    pending.remove(i)
                else:
                    metrics.consistent = False
                    log.warning("alg2 phase %d: success detected with %d initiators", phase, len(initiators))
            metrics.phase_rows.append(
                PhaseRow(phase, x_before, net.round - start, int(knowledge.multiplicity().min()), success))
            log.debug("alg2 phase %d: x=%d initiators=%d success=%s", phase, x_before, len(initiators), success)
    except RoundLimitExceeded as exc:
        metrics.truncated = True
        log.warning("alg2 truncated: %s", exc)
    metrics.phases = phase
    metrics.extra["retired"] = sorted(retired)
    metrics.extra["multi_mark_holders"] = multi_mark_holders
    metrics.extra["success_rate"] = metrics.successful_phases / phase if phase else math.nan
    log.info("alg2 finished: phases=%d successful=%d rounds=%d", phase, metrics.successful_phases, net.round)
    metrics.absorb_network(net)
    return knowledge.fill(metrics)

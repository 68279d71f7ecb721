"""
Random linear network coding over a prime field.

Every node keeps the span of the coded packets it has received, stored as a
basis in reduced row echelon form over the coefficient columns. In each round
it transmits, with probability 1/n, a uniformly random element of that span.
Once the span has full rank the messages are recovered by elimination.
"""
from __future__ import annotations
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Union
import logging
import math

import galois
import numpy as np

from .adversaries import AdversaryPolicy
from .core import Network, SimConfig, assign_sources
from .errors import DomainError, InvariantViolation, RoundLimitExceeded
from .metrics import Metrics
from .rng import seeded_rng

log = logging.getLogger(__name__)


class Decode(Enum):
    INCOMPLETE = "incomplete"


INCOMPLETE = Decode.INCOMPLETE


class PrimeField:
    """F_q for a prime q, backed by a galois field class."""

    def __init__(self, q: int):
        if q < 2 or not galois.is_prime(q):
            raise DomainError(f"q must be prime (got {q})")
        self.q = q
        self.GF = galois.GF(q)

    def __call__(self, values) -> galois.FieldArray:
        return self.GF(np.asarray(values, dtype=np.int64) % self.q)

    def zeros(self, shape) -> galois.FieldArray:
        return self.GF.Zeros(shape)

    def add(self, a: int, b: int) -> int:
        return int(self.GF(a % self.q) + self.GF(b % self.q))

    def mul(self, a: int, b: int) -> int:
        return int(self.GF(a % self.q) * self.GF(b % self.q))

    def inv(self, a: int) -> int:
        if a % self.q == 0:
            raise DomainError("0 has no multiplicative inverse")
        return int(self.GF(a % self.q) ** -1)


@dataclass(frozen=True, eq=False)
class CodedPacket:
    mu: galois.FieldArray
    m: galois.FieldArray

    @classmethod
    def zero(cls, field: PrimeField, s: int, l: int) -> "CodedPacket":
        return cls(field.zeros(s), field.zeros(l))

    @classmethod
    def unit(cls, field: PrimeField, s: int, i: int, message) -> "CodedPacket":
        mu = field.zeros(s)
        mu[i] = 1
        return cls(mu, field(message))

    def is_zero(self) -> bool:
        return not np.any(self.mu) and not np.any(self.m)


class SpanState:
    """Span of received packets as an RREF basis ``[coefficients | payload]``."""

    def __init__(self, field: PrimeField, s: int, l: int):
        self.field = field
        self.s = s
        self.l = l
        self.basis = field.zeros((0, s + l))
        self.pivots: List[int] = []

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    @property
    def coefficients(self) -> galois.FieldArray:
        return self.basis[:, :self.s]

    def _row(self, pkt: CodedPacket) -> galois.FieldArray:
        if pkt.mu.shape != (self.s,) or pkt.m.shape != (self.l,):
            raise DomainError(
                f"packet has dimensions ({pkt.mu.size}, {pkt.m.size}), span expects ({self.s}, {self.l})")
        return np.concatenate((pkt.mu, pkt.m))

    def insert(self, pkt: CodedPacket) -> bool:
        """Add a packet; True iff the rank grew."""
        row = self._row(pkt)
        if self.rank:
            row = row - row[self.pivots] @ self.basis
        if not np.any(row[:self.s]):
            return False
        stacked = np.concatenate((self.basis, row.reshape(1, -1)), axis=0)
        reduced = stacked.row_reduce(ncols=self.s)
        self.basis = reduced[: self.rank + 1]
        self.pivots = [int(np.flatnonzero(r[:self.s])[0]) for r in self.basis]
        return True

    def packets(self) -> List[CodedPacket]:
        return [CodedPacket(r[:self.s], r[self.s:]) for r in self.basis]


def span_insert(state: SpanState, pkt: CodedPacket) -> SpanState:
    state.insert(pkt)
    return state


def sample_uniform_span_packet(state: SpanState, rng) -> CodedPacket:
    """
    Uniform element of the span: independent uniform coefficients on the basis
    rows. ``rng`` is a numpy Generator or a RandomLedger.
    """
    if state.rank == 0:
        return CodedPacket.zero(state.field, state.s, state.l)
    coeffs = state.field(rng.integers(0, state.field.q, size=state.rank))
    row = coeffs @ state.basis
    return CodedPacket(row[:state.s], row[state.s:])


def knows_about(state: SpanState, mu) -> bool:
    """True iff mu is not orthogonal to the coefficient space of the span."""
    mu = state.field(mu)
    if mu.shape != (state.s,):
        raise DomainError(f"mu has length {mu.size}, expected {state.s}")
    if state.rank == 0:
        return False
    return bool(np.any(state.coefficients @ mu))


def decode(state: SpanState) -> Union[List[List[int]], Decode]:
    """The s message vectors, or INCOMPLETE below full rank."""
    if state.rank < state.s:
        return INCOMPLETE
    # full-rank RREF has the identity in the coefficient block
    return [[int(v) for v in state.basis[i, state.s:]] for i in range(state.s)]


def _sound(pkt: CodedPacket, messages: galois.FieldArray) -> bool:
    return bool(np.array_equal(pkt.mu @ messages, pkt.m))


@dataclass
class ProbeStats:
    """Statistics on one fixed coefficient vector mu."""
    eligible_rounds: int = 0
    new_learner_rounds: int = 0
    relays: int = 0
    retained: int = 0

    @property
    def new_learner_frequency(self) -> float:
        return self.new_learner_rounds / self.eligible_rounds if self.eligible_rounds else math.nan

    @property
    def retention(self) -> float:
        return self.retained / self.relays if self.relays else math.nan


def rlnc_broadcast(
    cfg: SimConfig,
    adversary: AdversaryPolicy,
    round_budget: Optional[int] = None,
    *,
    q: int = 257,
    payload_len: Optional[int] = None,
    kappa: float = 4.0,
    check_soundness: bool = True,
    elide: bool = True,
    net: Optional[Network] = None,
) -> Metrics:
    """
    Source of message i starts with (e_i, m_i), everyone else with nothing.
    Runs ceil(kappa * n * (n + s)) rounds unless ``round_budget`` is given.
    """
    n, s = cfg.n, cfg.s
    l = payload_len or s
    field = PrimeField(q)
    if net is None:
        net = Network(cfg, adversary, retain=1024)
    budget = round_budget if round_budget is not None else math.ceil(kappa * n * (n + s))
    messages = field(seeded_rng(cfg.seed, "messages").integers(0, q, size=(s, l)))
    truth = [[int(v) for v in row] for row in messages]
    spans = [SpanState(field, s, l) for _ in range(n)]
    for i, v in enumerate(assign_sources(n, s, cfg.seed, adversary.preferred_sources(s))):
        spans[v].insert(CodedPacket.unit(field, s, i, messages[i]))

    probe = field(seeded_rng(cfg.seed, "probe").integers(1, q, size=s))
    knows = np.array([knows_about(sp, probe) for sp in spans])
    stats = ProbeStats()
    decoded_at = np.full(n, -1, dtype=np.int64)
    metrics = Metrics(protocol="rlnc")
    spread = [(0, int(knows.sum()))]
    for v, sp in enumerate(spans):
        metrics.rank_rows.append((0, v, sp.rank, sp.rank == s))
        if sp.rank == s:
            decoded_at[v] = 0

    def check_decode(v: int, r: int) -> None:
        out = decode(spans[v])
        if out != truth:
            raise InvariantViolation(f"node {v} decoded wrong messages in round {r}")
        decoded_at[v] = r

    start = net.round
    try:
        while net.round - start < budget:
            if elide and (decoded_at >= 0).all():
                net.skip(budget - (net.round - start))
                break
            tx = net.ledger.random(n) < 1.0 / n
            intents = [sample_uniform_span_packet(spans[v], net.ledger) if tx[v] else None
                       for v in range(n)]
            if check_soundness:
                for v, pkt in enumerate(intents):
                    if pkt is not None and not _sound(pkt, messages):
                        raise InvariantViolation(f"node {v} sent a packet outside the message span")
            reception = net.step(intents)
            r = net.round
            eligible = not knows.all()
            learned_any = False
            for v, got in enumerate(reception):
                if got is None:
                    continue
                before = spans[v].rank
                knew = bool(knows[v])
                spans[v].insert(got.message)
                if not knew and knows_about(spans[v], probe):
                    knows[v] = True
                    learned_any = True
                if knows[got.sender] and not knew:
                    stats.relays += 1
                    stats.retained += int(knows[v])
                if spans[v].rank > before:
                    metrics.rank_rows.append((r, v, spans[v].rank, spans[v].rank == s))
                    if spans[v].rank == s:
                        check_decode(v, r)
            if eligible:
                stats.eligible_rounds += 1
                stats.new_learner_rounds += int(learned_any)
            if learned_any:
                spread.append((r, int(knows.sum())))
    except RoundLimitExceeded as exc:
        metrics.truncated = True
        log.warning("rlnc truncated: %s", exc)

    metrics.absorb_network(net)
    metrics.delivery = np.repeat(decoded_at[:, np.newaxis], s, axis=1)
    metrics.success = bool((decoded_at >= 0).all())
    metrics.extra.update(
        decode_rounds=decoded_at.tolist(),
        spread=spread,
        new_learner_frequency=stats.new_learner_frequency,
        relay_retention=stats.retention,
        probe=stats,
        q=q,
    )
    if not metrics.success:
        log.warning("rlnc: %d of %d nodes decoded within %d rounds",
                    int((decoded_at >= 0).sum()), n, budget)
    return metrics

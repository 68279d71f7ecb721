"""
Round-synchronous radio network engine.

A node receives in round r iff it listens and exactly one of its neighbours in
G_r transmits; zero or several transmitting neighbours both sound like silence.
Transmitters hear nothing in the round they transmit.
"""
from __future__ import annotations
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache
from typing import (
    Any, Callable, Deque, Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence,
    Tuple, Union,
)
import logging
import math

import networkx as nx
import numpy as np

from .errors import (
    AuditViolation, ConfigError, DomainError, InvariantViolation, RoundLimitExceeded,
    SimulationHalted,
)
from .rng import RandomLedger, seeded_rng

log = logging.getLogger(__name__)

NodeId = int
Payload = Any
SILENT = None
INFINITY = math.inf

# Obliviousness / interval parameters: a positive int or math.inf.
Extended = Union[int, float]

Edge = Tuple[int, int]


def canonical_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class RoundGraph:
    """Communication graph of one round: nodes 0..n-1, undirected edges stored as (u, v), u < v."""
    n: int
    edges: FrozenSet[Edge] = frozenset()

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"graph needs at least one node (got n={self.n})")
        canon = set()
        for u, v in self.edges:
            if u == v:
                raise DomainError(f"self-loop on node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise DomainError(f"edge ({u}, {v}) outside nodes 0..{self.n - 1}")
            canon.add(canonical_edge(u, v))
        object.__setattr__(self, "edges", frozenset(canon))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Tuple[int, int]]) -> "RoundGraph":
        return cls(n, frozenset(edges))

    @staticmethod
    def complete(n: int) -> "RoundGraph":
        return _complete_graph(n)

    @staticmethod
    def complete_minus(n: int, u: int, v: int) -> "RoundGraph":
        """K_n without the edge {u, v} (just K_n when u == v)."""
        if u == v:
            return _complete_graph(n)
        return _complete_minus(n, *canonical_edge(u, v))

    @cached_property
    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        if self.edges:
            e = np.array(sorted(self.edges), dtype=np.intp)
            adj[e[:, 0], e[:, 1]] = True
            adj[e[:, 1], e[:, 0]] = True
        return adj

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    def neighbors(self, u: int) -> List[int]:
        return [int(v) for v in np.flatnonzero(self.adjacency[u])]

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g

    def is_connected(self) -> bool:
        return _edges_connected(self.n, self.edges)


@lru_cache(maxsize=64)
def _complete_graph(n: int) -> RoundGraph:
    return RoundGraph(n, frozenset((u, v) for u in range(n) for v in range(u + 1, n)))


@lru_cache(maxsize=4096)
def _complete_minus(n: int, u: int, v: int) -> RoundGraph:
    return RoundGraph(n, _complete_graph(n).edges - {(u, v)})


@lru_cache(maxsize=8192)
def _edges_connected(n: int, edges: FrozenSet[Edge]) -> bool:
    if n == 1:
        return True
    if len(edges) < n - 1:
        return False
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(edges)
    return nx.is_connected(g)


class Control(Enum):
    """Control traffic that carries no broadcast message."""
    BOTTOM = "bottom"


@dataclass(frozen=True)
class Packet:
    """A store-and-forward message: the broadcast-message IDs it carries."""
    messages: FrozenSet[int]

    @classmethod
    def of(cls, *ids: int) -> "Packet":
        return cls(frozenset(int(i) for i in ids))


def single_message(payload: Optional[Payload]) -> Optional[int]:
    """The broadcast-message ID of a one-message packet, else None."""
    if isinstance(payload, Packet) and len(payload.messages) == 1:
        return next(iter(payload.messages))
    return None


class Received(NamedTuple):
    message: Payload
    sender: NodeId


# One entry per node: a Received, or None for silence.
Reception = Tuple[Optional[Received], ...]
# One entry per node: the transmitted payload, or SILENT (None).
TransmitIntent = Sequence[Optional[Payload]]


def resolve_round(graph: RoundGraph, intents: TransmitIntent) -> Reception:
    """Apply the radio reception rule to one round."""
    n = graph.n
    if len(intents) != n:
        raise ConfigError(f"intents cover {len(intents)} nodes but the graph has {n}")
    senders = [v for v, m in enumerate(intents) if m is not None]
    out: List[Optional[Received]] = [None] * n
    if not senders:
        return tuple(out)
    adj = graph.adjacency
    if len(senders) == 1:
        w = senders[0]
        for v in np.flatnonzero(adj[w]):
            out[int(v)] = Received(intents[w], w)
        return tuple(out)
    tx = np.zeros(n, dtype=bool)
    tx[senders] = True
    sub = adj[:, senders]
    counts = sub.sum(axis=1)
    for v in np.flatnonzero((counts == 1) & ~tx):
        w = senders[int(np.argmax(sub[v]))]
        out[int(v)] = Received(intents[w], w)
    return tuple(out)


def _window_ok(n: int, window: Sequence[RoundGraph]) -> bool:
    inter = window[0].edges
    for g in window[1:]:
        inter = inter & g.edges
    return _edges_connected(n, inter)


def check_interval_connectivity(schedule: Sequence[RoundGraph], T: Extended) -> bool:
    """
    True iff every window of T consecutive rounds shares a connected spanning
    subgraph. Windows running past the end of the trace are checked on the suffix
    that exists; T = inf means the whole trace is one window.
    """
    if T is None or T < 1:
        raise DomainError(f"T must be >= 1 (got {T!r})")
    if not schedule:
        raise DomainError("schedule must not be empty")
    n = schedule[0].n
    if any(g.n != n for g in schedule):
        raise ConfigError("all graphs in a schedule must have the same node count")
    length = len(schedule)
    span = length if math.isinf(T) else int(T)
    for start in range(length):
        if not _window_ok(n, schedule[start:min(start + span, length)]):
            return False
        if start + span >= length:
            # every later window is a suffix of this one
            break
    return True


class IntervalAuditor:
    """
    Online T-interval check over the graphs of one run.

    Elided rounds are never shown to the auditor. A gap in the observed round
    numbers closes the current window: the partial window is checked on its
    own (it lies inside some full window of the real schedule) and a fresh one
    starts after the gap.
    """

    def __init__(self, n: int, T: Extended):
        if T < 1:
            raise DomainError(f"T must be >= 1 (got {T!r})")
        self.n = n
        self.T = T
        self.rounds = 0
        self._window: Deque[FrozenSet[Edge]] = deque(maxlen=None if math.isinf(T) else int(T))
        self._window_start = 0
        self._last: Optional[int] = None
        self._running: Optional[FrozenSet[Edge]] = None
        self.violation_round: Optional[int] = None

    def observe(self, round_index: int, graph: RoundGraph) -> None:
        self.rounds += 1
        if math.isinf(self.T):
            self._running = graph.edges if self._running is None else self._running & graph.edges
            self._last = round_index
            return
        if self._last is not None and round_index != self._last + 1:
            self._close_partial()
            self._window.clear()
        if not self._window:
            self._window_start = round_index
        self._last = round_index
        self._window.append(graph.edges)
        if len(self._window) == self.T:
            self._window_start = round_index - int(self.T) + 1
            self._flag(self._window_start)

    def _flag(self, start: int) -> None:
        inter = self._window[0]
        for e in list(self._window)[1:]:
            inter = inter & e
        if not _edges_connected(self.n, inter) and self.violation_round is None:
            self.violation_round = start

    def _close_partial(self) -> None:
        if self._window and len(self._window) < self.T:
            self._flag(self._window_start)

    def finish(self) -> bool:
        """Raise AuditViolation if the observed schedule broke the T promise."""
        if not math.isinf(self.T):
            self._close_partial()
        if self.violation_round is not None:
            raise AuditViolation(
                f"window starting at round {self.violation_round} is not connected (T={self.T})")
        if self.rounds == 0:
            return True
        if math.isinf(self.T) and not _edges_connected(self.n, self._running):
            raise AuditViolation("no connected subgraph is stable over the whole run (T=inf)")
        return True


@dataclass(frozen=True)
class SimConfig:
    n: int
    s: int = 1
    c: int = 1
    B: int = 1
    seed: int = 0
    round_limit: int = 1_000_000_000

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"n must be >= 2 (got {self.n})")
        if self.s < 1:
            raise ConfigError(f"s must be >= 1 (got {self.s})")
        if self.c < 1:
            raise ConfigError(f"c must be >= 1 (got {self.c})")
        if self.B < 1:
            raise ConfigError(f"B must be >= 1 (got {self.B})")
        if self.round_limit < 1:
            raise ConfigError(f"round_limit must be >= 1 (got {self.round_limit})")


def assign_sources(n: int, s: int, seed: int, preferred: Optional[Sequence[int]] = None) -> List[int]:
    """
    Initial holder of every broadcast message: distinct random nodes while
    s <= n, wrapping around a random permutation beyond that.
    """
    if preferred is not None:
        if len(preferred) != s:
            raise ConfigError(f"{len(preferred)} preset sources for s={s} messages")
        return [int(v) for v in preferred]
    perm = seeded_rng(seed, "assignment").permutation(n)
    return [int(perm[i % n]) for i in range(s)]


@dataclass(frozen=True)
class RoundRecord:
    round: int
    draws: Tuple[Tuple[str, Any], ...]
    intents: Tuple[Optional[Payload], ...]
    graph: RoundGraph
    reception: Reception

    @property
    def transmitters(self) -> List[int]:
        return [v for v, m in enumerate(self.intents) if m is not None]


class DynamicHistory:
    """Append-only trace of resolved rounds; ``retain`` bounds memory for long runs."""

    def __init__(self, retain: Optional[int] = None):
        self.retain = retain
        self._records: Dict[int, RoundRecord] = {}
        self._order: Deque[int] = deque()
        self.latest_round = 0

    def append(self, record: RoundRecord) -> None:
        if record.round <= self.latest_round:
            raise InvariantViolation(
                f"history is append-only (round {record.round} after {self.latest_round})")
        self._records[record.round] = record
        self._order.append(record.round)
        self.latest_round = record.round
        if self.retain is not None:
            while len(self._order) > self.retain:
                del self._records[self._order.popleft()]

    def record(self, round_index: int) -> Optional[RoundRecord]:
        """The record of a round, or None for elided/unretained rounds."""
        return self._records.get(round_index)

    def records(self) -> List[RoundRecord]:
        return [self._records[r] for r in self._order]

    def schedule(self) -> List[RoundGraph]:
        return [rec.graph for rec in self.records()]

    def __len__(self) -> int:
        return len(self._order)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DynamicHistory):
            return NotImplemented
        return _records_key(self.records()) == _records_key(other.records())


def _records_key(records: List[RoundRecord]):
    def draws_key(draws):
        return tuple((kind, np.asarray(v).tolist()) for kind, v in draws)
    return [(r.round, draws_key(r.draws), r.intents, r.graph.edges, r.reception) for r in records]


class HistoryView:
    """
    What an adversary may see while choosing G_r: rounds <= r - tau only. For
    tau = 0 that includes round r's intents and draws, which are already fixed.
    """

    def __init__(self, history: DynamicHistory, ledger: RandomLedger, n: int, round_index: int,
                 tau: Extended, intents: Tuple[Optional[Payload], ...]):
        self._history = history
        self._ledger = ledger
        self._intents = intents
        self.n = n
        self.round = round_index
        self.tau = tau
        self.accesses = 0

    def _check(self, r: int, what: str) -> None:
        self.accesses += 1
        if r < 1 or r > self.round - self.tau:
            raise AuditViolation(
                f"{what} of round {r} read while choosing round {self.round} (tau={self.tau})")

    def intents(self, r: int) -> Tuple[Optional[Payload], ...]:
        self._check(r, "intents")
        if r == self.round:
            return self._intents
        rec = self._history.record(r)
        return rec.intents if rec else (None,) * self.n

    def draws(self, r: int) -> List[Tuple[str, Any]]:
        self._check(r, "draws")
        return self._ledger.draws(r)

    def graph(self, r: int) -> Optional[RoundGraph]:
        self._check(r, "graph")
        if r == self.round:
            raise AuditViolation(f"graph of round {r} is not resolved yet")
        rec = self._history.record(r)
        return rec.graph if rec else None

    def reception(self, r: int) -> Reception:
        self._check(r, "reception")
        if r == self.round:
            raise AuditViolation(f"reception of round {r} is not resolved yet")
        rec = self._history.record(r)
        return rec.reception if rec else (None,) * self.n


@dataclass
class RoundStats:
    simulated_rounds: int = 0
    elided_rounds: int = 0
    transmissions: int = 0
    isolation_rounds: int = 0
    collision_rounds: int = 0
    receptions: int = 0
    isolation_log: List[int] = field(default_factory=list)


class Network:
    """
    One simulation run: the shared round counter, the protocol's random ledger,
    the adversary and the trace. Protocol code calls ``step`` once per round.
    """

    def __init__(
        self,
        cfg: SimConfig,
        adversary,
        *,
        retain: Optional[int] = None,
        audit_connectivity: bool = True,
        capacity: Optional[int] = None,
        halt: Optional[Callable[[RoundRecord], bool]] = None,
        resolver: Callable[[RoundGraph, TransmitIntent], Reception] = resolve_round,
    ):
        self.cfg = cfg
        self.n = cfg.n
        self.adversary = adversary
        self.round = 0
        self.ledger = RandomLedger(seeded_rng(cfg.seed, "protocol"))
        self.history = DynamicHistory(retain)
        self.stats = RoundStats()
        self.capacity = capacity
        self.halt = halt
        self.resolver = resolver
        self.listeners: List[Callable[[RoundRecord], None]] = []
        self.auditor = IntervalAuditor(cfg.n, adversary.t_promise) if audit_connectivity else None
        adversary.start(cfg.n, cfg.seed)

    def remaining(self) -> int:
        return self.cfg.round_limit - self.round

    def step(self, intents: TransmitIntent) -> Reception:
        r = self.round + 1
        if r > self.cfg.round_limit:
            raise RoundLimitExceeded(self.cfg.round_limit)
        intents = tuple(intents)
        if len(intents) != self.n:
            raise ConfigError(f"intents cover {len(intents)} nodes, network has {self.n}")
        if self.capacity is not None:
            for m in intents:
                carried = getattr(m, "messages", ())
                if len(carried) > self.capacity:
                    raise InvariantViolation(
                        f"round {r}: message carries {len(carried)} > c={self.capacity} broadcast messages")
        draws = tuple(self.ledger.seal(r))
        view = HistoryView(self.history, self.ledger, self.n, r, self.adversary.tau, intents)
        graph = self.adversary.next_graph(view, r)
        if graph.n != self.n:
            raise ConfigError(f"adversary produced a {graph.n}-node graph for a {self.n}-node network")
        reception = self.resolver(graph, intents)
        record = RoundRecord(r, draws, intents, graph, reception)
        self.history.append(record)
        if self.history.retain is not None:
            self.ledger.forget_before(r - self.history.retain)
        if self.auditor is not None:
            self.auditor.observe(r, graph)
        self._count(record)
        self.round = r
        for listener in self.listeners:
            listener(record)
        if self.halt is not None and self.halt(record):
            raise SimulationHalted(r)
        return reception

    def skip(self, rounds: int) -> None:
        """Advance over rounds in which nothing can happen (nobody transmits or learns)."""
        if rounds <= 0:
            return
        if rounds > self.remaining():
            self.stats.elided_rounds += self.remaining()
            self.round = self.cfg.round_limit
            raise RoundLimitExceeded(self.cfg.round_limit)
        self.round += rounds
        self.stats.elided_rounds += rounds

    def audit(self) -> bool:
        """Post-run check of the adversary's T promise."""
        if self.auditor is None:
            return True
        return self.auditor.finish()

    def _count(self, record: RoundRecord) -> None:
        st = self.stats
        st.simulated_rounds += 1
        k = sum(1 for m in record.intents if m is not None)
        st.transmissions += k
        if k == 1:
            st.isolation_rounds += 1
            st.isolation_log.append(record.round)
        elif k > 1:
            st.collision_rounds += 1
        st.receptions += sum(1 for x in record.reception if x is not None)

"""
Adversaries that choose the communication graph of every round.

An adversary declares its obliviousness ``tau`` and its interval-connectivity
promise ``t_promise``. The network hands it a HistoryView that refuses reads of
rounds later than r - tau, and audits the emitted schedule against t_promise.
"""
from __future__ import annotations
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set
import logging
import math

import networkx as nx
import numpy as np

from .core import (
    Edge, Extended, HistoryView, RoundGraph, canonical_edge, single_message,
)
from .errors import ConfigError, DomainError
from .rng import seeded_rng

log = logging.getLogger(__name__)


class AdversaryPolicy(ABC):
    """Base class; subclasses set ``name``, ``tau`` and ``t_promise``."""

    name: str = "adversary"
    tau: Extended = math.inf
    t_promise: Extended = math.inf
    # heuristics are labelled as such in harness output
    heuristic: bool = False

    def start(self, n: int, seed: int) -> None:
        self.n = n
        self.seed = seed

    @abstractmethod
    def next_graph(self, view: HistoryView, r: int) -> RoundGraph:
        ...

    def preferred_sources(self, s: int) -> Optional[List[int]]:
        """Nodes that must hold the broadcast messages initially, if the environment fixes them."""
        return None

    def describe(self) -> str:
        label = f"{self.name} (tau={self.tau}, T={self.t_promise})"
        return label + " [adversarial heuristic]" if self.heuristic else label


@dataclass(frozen=True)
class StableSubgraph:
    """A connected spanning subgraph present in every round."""
    n: int
    edges: FrozenSet[Edge]

    def __post_init__(self):
        graph = RoundGraph(self.n, frozenset(self.edges))
        object.__setattr__(self, "edges", graph.edges)
        if not graph.is_connected():
            raise ConfigError("stable subgraph must be connected and span all nodes")

    @cached_property
    def graph(self) -> RoundGraph:
        return RoundGraph(self.n, self.edges)

    @property
    def max_degree(self) -> int:
        return self.graph.max_degree

    @classmethod
    def ring(cls, n: int) -> "StableSubgraph":
        if n == 2:
            return cls(2, frozenset({(0, 1)}))
        return cls(n, frozenset(canonical_edge(v, (v + 1) % n) for v in range(n)))

    @classmethod
    def clique(cls, n: int) -> "StableSubgraph":
        return cls(n, RoundGraph.complete(n).edges)


def _transmitters(view: HistoryView, r: int) -> List[int]:
    return [v for v, m in enumerate(view.intents(r)) if m is not None]


def random_tree_edges(nodes: Sequence[int], rng: np.random.Generator) -> Set[Edge]:
    """Uniform spanning tree on ``nodes`` drawn through a random Pruefer sequence."""
    m = len(nodes)
    if m < 2:
        return set()
    if m == 2:
        return {canonical_edge(nodes[0], nodes[1])}
    tree = nx.from_prufer_sequence([int(x) for x in rng.integers(0, m, size=m - 2)])
    return {canonical_edge(nodes[u], nodes[v]) for u, v in tree.edges()}


class StaticAdversary(AdversaryPolicy):
    name = "static"

    def __init__(self, stable: StableSubgraph, tau: Extended = math.inf):
        self.stable = stable
        self.tau = tau
        self.t_promise = math.inf

    def next_graph(self, view: HistoryView, r: int) -> RoundGraph:
        return self.stable.graph


class StrongDualGraphAdversary(AdversaryPolicy):
    """
    Strongly adaptive dual-graph adversary: a round with two or more
    transmitters runs on the complete graph (everyone collides), any other
    round only on the stable subgraph.
    """
    name = "dualgraph-strong"
    tau = 0
    t_promise = math.inf

    def __init__(self, stable: StableSubgraph):
        self.stable = stable

    def next_graph(self, view: HistoryView, r: int) -> RoundGraph:
        if len(_transmitters(view, r)) >= 2:
            return RoundGraph.complete(self.stable.n)
        return self.stable.graph


class TargetNetworkAdversary(AdversaryPolicy):
    """
    K_n or K_n minus one edge, chosen from the round's sole transmitter.

    ``externals[i]`` is the node e_i that must eventually hear message i.
    ``is_bridge(w, i)`` answers whether w is e_i's clique neighbour; in the
    lower-bound player that answer comes from the hitting-game referee.
    """
    name = "target-network"
    tau = 0
    t_promise = math.inf

    def __init__(self, externals: Sequence[int], is_bridge: Callable[[int, int], bool],
                 holders: Optional[Sequence[int]] = None):
        self.externals = list(externals)
        self._external_set = set(self.externals)
        self.is_bridge = is_bridge
        self.holders = list(holders) if holders is not None else None
        self.oracle_calls = 0

    def preferred_sources(self, s: int) -> Optional[List[int]]:
        return self.holders

    def next_graph(self, view: HistoryView, r: int) -> RoundGraph:
        intents = view.intents(r)
        senders = [v for v, m in enumerate(intents) if m is not None]
        if len(senders) != 1:
            return RoundGraph.complete(self.n)
        w = senders[0]
        i = single_message(intents[w])
        if i is None or i >= len(self.externals):
            return RoundGraph.complete(self.n)
        e_i = self.externals[i]
        if w in self._external_set:
            return RoundGraph.complete_minus(self.n, w, e_i)
        self.oracle_calls += 1
        if self.is_bridge(w, i):
            return RoundGraph.complete(self.n)
        return RoundGraph.complete_minus(self.n, w, e_i)


class RandomConnectedAdversary(AdversaryPolicy):
    """
    Benign baseline: random spanning backbones plus random extra edges.

    Backbones are resampled in blocks of T rounds and every round carries the
    backbones of its own and the previous block, so any T consecutive rounds
    share a tree. T = 1 gives a fresh tree every round, T = inf a single
    backbone. The graph of round r depends only on (seed, r).
    """
    name = "random-connected"

    def __init__(self, T: Extended = math.inf, tau: Extended = math.inf, extra_p: float = 0.0):
        if T < 1:
            raise DomainError(f"T must be >= 1 (got {T!r})")
        if not 0.0 <= extra_p <= 1.0:
            raise ConfigError(f"extra edge probability must lie in [0, 1] (got {extra_p})")
        self.t_promise = T
        self.tau = tau
        self.extra_p = extra_p
        self._backbones: Dict[int, FrozenSet[Edge]] = {}
        self._cached = None

    def start(self, n: int, seed: int) -> None:
        super().start(n, seed)
        self._backbones.clear()
        self._cached = None

    def _backbone(self, block: int) -> FrozenSet[Edge]:
        edges = self._backbones.pop(block, None)
        if edges is None:
            rng = seeded_rng(self.seed, f"adversary:backbone:{block}")
            edges = frozenset(random_tree_edges(range(self.n), rng))
        # least recently used first
        self._backbones[block] = edges
        while len(self._backbones) > 4:
            del self._backbones[next(iter(self._backbones))]
        return edges

    def graph_at(self, r: int) -> RoundGraph:
        if math.isinf(self.t_promise):
            block = 0
        elif self.t_promise == 1:
            block = r
        else:
            block = (r - 1) // int(self.t_promise)
        if self.extra_p == 0 and self._cached is not None and self._cached[0] == block:
            return self._cached[1]
        edges = set(self._backbone(block))
        if block > 0 and self.t_promise > 1:
            edges |= self._backbone(block - 1)
        if self.extra_p == 0:
            self._cached = (block, RoundGraph(self.n, frozenset(edges)))
            return self._cached[1]
        rng = seeded_rng(self.seed, f"adversary:extra:{r}")
        iu, ju = np.triu_indices(self.n, k=1)
        pick = rng.random(iu.size) < self.extra_p
        edges.update(zip(iu[pick].tolist(), ju[pick].tolist()))
        return RoundGraph(self.n, frozenset(edges))

    def schedule(self, rounds: int) -> List[RoundGraph]:
        """Pre-generate G_1..G_rounds."""
        return [self.graph_at(r) for r in range(1, rounds + 1)]

    def next_graph(self, view: HistoryView, r: int) -> RoundGraph:
        return self.graph_at(r)


class IsolatingTreeAdversary(AdversaryPolicy):
    """
    Weakly adaptive 1-interval heuristic. From the trace up to round r-1 it
    knows which nodes hold something; it hangs all uninformed nodes off a single
    long-informed node so freshly informed nodes sit away from the frontier.
    """
    name = "isolating-tree"
    tau = 1
    t_promise = 1
    heuristic = True

    def start(self, n: int, seed: int) -> None:
        super().start(n, seed)
        self._informed_at: Dict[int, int] = {}
        self._seen = 0

    def _absorb(self, view: HistoryView, r: int) -> None:
        for past in range(self._seen + 1, r):
            for v, m in enumerate(view.intents(past)):
                if m is not None:
                    self._informed_at.setdefault(v, past)
            for v, got in enumerate(view.reception(past)):
                if got is not None:
                    self._informed_at.setdefault(v, past)
        self._seen = max(self._seen, r - 1)

    def next_graph(self, view: HistoryView, r: int) -> RoundGraph:
        self._absorb(view, r)
        rng = seeded_rng(self.seed, f"adversary:isolating:{r}")
        informed = sorted(self._informed_at, key=lambda v: (self._informed_at[v], v))
        uninformed = [v for v in range(self.n) if v not in self._informed_at]
        if not informed or not uninformed:
            return RoundGraph(self.n, frozenset(random_tree_edges(list(range(self.n)), rng)))
        edges = random_tree_edges(informed, rng) | random_tree_edges(uninformed, rng)
        anchor = informed[0]
        edges.add(canonical_edge(anchor, int(uninformed[int(rng.integers(len(uninformed)))])))
        return RoundGraph(self.n, frozenset(edges))


ADVERSARY_NAMES = ("static", "dualgraph-strong", "target-network", "random-connected", "isolating-tree")


def make_adversary(
    name: str,
    n: int,
    *,
    s: int = 1,
    T: Extended = math.inf,
    tau: Extended = math.inf,
    extra_p: float = 0.0,
    stable: Optional[StableSubgraph] = None,
    seed: int = 0,
) -> AdversaryPolicy:
    """Build an adversary by its configuration name."""
    if name == "static":
        return StaticAdversary(stable or StableSubgraph.ring(n), tau=tau)
    if name == "dualgraph-strong":
        return StrongDualGraphAdversary(stable or StableSubgraph.ring(n))
    if name == "random-connected":
        return RandomConnectedAdversary(T=T, tau=tau, extra_p=extra_p)
    if name == "isolating-tree":
        return IsolatingTreeAdversary()
    if name == "target-network":
        from .lower_bound import build_target_network, referee_new
        if not 1 <= s < n - s:
            raise ConfigError(f"target-network needs 1 <= s < n - s (got n={n}, s={s})")
        instance = referee_new(n - s, s, seed)
        _, adversary = build_target_network(instance, n, s, seed, public=True)
        return adversary
    raise ConfigError(f"unknown adversary {name!r}; valid names: {', '.join(ADVERSARY_NAMES)}")

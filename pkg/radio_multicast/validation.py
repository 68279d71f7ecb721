"""
Invariant suite: brute-force oracles for the reception rule and T-interval
connectivity, field and span algebra, and history/promise audits of adversaries.
"""
from __future__ import annotations
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Callable, Iterable, List, Optional, Sequence, Set, Tuple
import logging
import math

import numpy as np

from .adversaries import (
    AdversaryPolicy, IsolatingTreeAdversary, RandomConnectedAdversary, StableSubgraph,
    StaticAdversary, StrongDualGraphAdversary, make_adversary,
)
from .core import (
    Edge, Network, Packet, Received, Reception, RoundGraph, SimConfig, TransmitIntent,
    check_interval_connectivity, resolve_round,
)
from .errors import AuditViolation, DomainError, SimError
from .rlnc import CodedPacket, PrimeField, SpanState, decode, knows_about, sample_uniform_span_packet
from .rng import derive_seed, seeded_rng

log = logging.getLogger(__name__)

Resolver = Callable[[RoundGraph, TransmitIntent], Reception]

# Per-node transmit probabilities cycled across audit runs.
AUDIT_DENSITIES = (0.1, 0.3, 0.6)


@dataclass
class CheckResult:
    name: str
    passed: bool
    cases: int = 0
    detail: str = ""
    counterexample: Optional[str] = None


@dataclass
class ValidationReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def render(self) -> str:
        lines = [f"{'Check':<28} {'Result':<6} {'Cases':>8}  Detail", "-" * 72]
        for c in self.checks:
            lines.append(f"{c.name:<28} {'PASS' if c.passed else 'FAIL':<6} {c.cases:>8}  {c.detail}")
            if c.counterexample:
                lines.append(f"{'':<28} counterexample: {c.counterexample}")
        lines.append("-" * 72)
        lines.append(f"{len(self.checks) - len(self.failures())}/{len(self.checks)} checks passed")
        return "\n".join(lines)


# --- reception rule --------------------------------------------------------------

def brute_force_reception(n: int, edges: Set[Edge], intents: TransmitIntent) -> Reception:
    out: List[Optional[Received]] = []
    for v in range(n):
        if intents[v] is not None:
            out.append(None)
            continue
        heard = [w for w in range(n) if intents[w] is not None and (min(v, w), max(v, w)) in edges]
        out.append(Received(intents[heard[0]], heard[0]) if len(heard) == 1 else None)
    return tuple(out)


def check_reception(resolver: Resolver = resolve_round, max_n: int = 5) -> CheckResult:
    """Every graph on 2..max_n nodes against every transmit pattern."""
    cases = 0
    for n in range(2, max_n + 1):
        pairs = list(combinations(range(n), 2))
        for mask in range(1 << len(pairs)):
            edges = {pairs[j] for j in range(len(pairs)) if mask >> j & 1}
            graph = RoundGraph(n, frozenset(edges))
            for pattern in product((False, True), repeat=n):
                intents = [Packet.of(v) if pattern[v] else None for v in range(n)]
                cases += 1
                expected = brute_force_reception(n, edges, intents)
                got = tuple(resolver(graph, intents))
                if got != expected:
                    tx = [v for v in range(n) if pattern[v]]
                    return CheckResult(
                        "reception-oracle", False, cases, f"mismatch on a {n}-node graph",
                        f"n={n} edges={sorted(edges)} transmitters={tx} expected={_brief(expected)} "
                        f"got={_brief(got)}")
    return CheckResult("reception-oracle", True, cases, f"all graphs on n <= {max_n} nodes")


def _brief(reception: Reception) -> str:
    return "[" + ", ".join("-" if r is None else f"{r.sender}" for r in reception) + "]"


# --- interval connectivity -------------------------------------------------------

def _bfs_connected(n: int, edges: Iterable[Edge]) -> bool:
    adj = {v: set() for v in range(n)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in adj[u] - seen:
            seen.add(w)
            queue.append(w)
    return len(seen) == n


def brute_force_interval(schedule: Sequence[RoundGraph], T: int) -> bool:
    length = len(schedule)
    n = schedule[0].n
    for start in range(length):
        window = schedule[start:min(start + T, length)]
        inter = set(window[0].edges)
        for g in window[1:]:
            inter &= g.edges
        if not _bfs_connected(n, inter):
            return False
    return True


def _random_graph(n: int, rng: np.random.Generator) -> RoundGraph:
    p = float(rng.choice([0.3, 0.6, 0.9]))
    edges = {(u, v) for u, v in combinations(range(n), 2) if rng.random() < p}
    return RoundGraph(n, frozenset(edges))


def check_connectivity(schedules: int = 500, seed: int = 0) -> CheckResult:
    """Random schedules (n <= 8, length <= 10) against BFS, plus monotonicity in T."""
    rng = seeded_rng(seed, "validate:connectivity")
    cases = 0
    for _ in range(schedules):
        n = int(rng.integers(2, 9))
        length = int(rng.integers(1, 11))
        schedule = [_random_graph(n, rng) for _ in range(length)]
        previous = True
        for T in range(1, length + 1):
            cases += 1
            got = check_interval_connectivity(schedule, T)
            expected = brute_force_interval(schedule, T)
            if got != expected:
                return CheckResult("connectivity-oracle", False, cases, "mismatch with BFS",
                                   f"n={n} T={T} schedule={[sorted(g.edges) for g in schedule]}")
            if got and not previous:
                return CheckResult("connectivity-oracle", False, cases, "not monotone in T",
                                   f"n={n}: holds for T={T} but not T={T - 1}")
            previous = got
        if check_interval_connectivity(schedule, math.inf) != brute_force_interval(schedule, length):
            return CheckResult("connectivity-oracle", False, cases, "T=inf differs from T=length",
                               f"n={n} length={length}")
    return CheckResult("connectivity-oracle", True, cases, f"{schedules} random schedules")


# --- field and span algebra ------------------------------------------------------

def check_field(primes: Sequence[int] = (2, 3, 5, 7, 257), samples: int = 200, seed: int = 0) -> CheckResult:
    rng = seeded_rng(seed, "validate:field")
    cases = 0
    for q in primes:
        F = PrimeField(q)
        for a in range(1, q):
            cases += 1
            if F.mul(a, F.inv(a)) != 1:
                return CheckResult("field-algebra", False, cases, "inverse", f"q={q} a={a}")
        try:
            F.inv(0)
            return CheckResult("field-algebra", False, cases, "inv(0) did not raise", f"q={q}")
        except DomainError:
            pass
        for a, b, c in rng.integers(0, q, size=(samples, 3)).tolist():
            cases += 1
            if F.add(a, b) != (a + b) % q or F.mul(a, b) != (a * b) % q:
                return CheckResult("field-algebra", False, cases, "modular arithmetic", f"q={q} a={a} b={b}")
            if F.mul(a, F.add(b, c)) != F.add(F.mul(a, b), F.mul(a, c)):
                return CheckResult("field-algebra", False, cases, "distributivity", f"q={q} a={a} b={b} c={c}")
            if F.mul(F.mul(a, b), c) != F.mul(a, F.mul(b, c)):
                return CheckResult("field-algebra", False, cases, "associativity", f"q={q} a={a} b={b} c={c}")
    return CheckResult("field-algebra", True, cases, f"q in {list(primes)}")


def _span_elements(state: SpanState) -> List[Tuple[int, ...]]:
    q = state.field.q
    rows = [list(map(int, r)) for r in state.basis]
    out = set()
    for coeffs in product(range(q), repeat=len(rows)):
        vec = [0] * (state.s + state.l)
        for a, row in zip(coeffs, rows):
            vec = [(x + a * y) % q for x, y in zip(vec, row)]
        out.add(tuple(vec))
    return sorted(out)


def check_span(trials: int = 40, seed: int = 0) -> CheckResult:
    """Small fields: knows_about, rank growth, sampling and decoding against enumeration."""
    rng = seeded_rng(seed, "validate:span")
    cases = 0
    for trial in range(trials):
        q = int(rng.choice([2, 3, 5]))
        s, l = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        F = PrimeField(q)
        messages = F(rng.integers(0, q, size=(s, l)))
        state = SpanState(F, s, l)
        for _ in range(int(rng.integers(1, s + 2))):
            mu = F(rng.integers(0, q, size=s))
            pkt = CodedPacket(mu, mu @ messages)
            before_rank = state.rank
            before = set(_span_elements(state))
            grew = state.insert(pkt)
            after = set(_span_elements(state))
            cases += 1
            in_before = tuple(int(x) for x in np.concatenate((pkt.mu, pkt.m))) in before
            if grew == in_before or state.rank < before_rank or not before <= after:
                return CheckResult("span-properties", False, cases, "rank growth",
                                   f"q={q} s={s} packet mu={pkt.mu.tolist()} rank {before_rank}->{state.rank}")
            sample = sample_uniform_span_packet(state, rng)
            if tuple(int(x) for x in np.concatenate((sample.mu, sample.m))) not in after:
                return CheckResult("span-properties", False, cases, "sample outside span",
                                   f"q={q} s={s} sample={sample.mu.tolist()}")
        coeff_space = {e[:s] for e in _span_elements(state)}
        for mu in product(range(q), repeat=s):
            cases += 1
            expected = any(sum(a * b for a, b in zip(x, mu)) % q for x in coeff_space)
            if knows_about(state, list(mu)) != expected:
                return CheckResult("span-properties", False, cases, "knows_about",
                                   f"q={q} s={s} mu={list(mu)} basis={state.basis.tolist()}")
        if state.rank == s and decode(state) != messages.tolist():
            return CheckResult("span-properties", False, cases, "decode", f"q={q} s={s} trial={trial}")
    return CheckResult("span-properties", True, cases, f"{trials} random spans over q in {{2, 3, 5}}")


# --- adversary audits ------------------------------------------------------------

def default_adversaries(n: int = 6) -> List[AdversaryPolicy]:
    ring = StableSubgraph.ring(n)
    return [
        StaticAdversary(ring),
        StrongDualGraphAdversary(ring),
        RandomConnectedAdversary(T=math.inf),
        RandomConnectedAdversary(T=1),
        RandomConnectedAdversary(T=3, extra_p=0.2),
        IsolatingTreeAdversary(),
        make_adversary("target-network", n, s=2, seed=1),
    ]


def audit_adversary(adversary: AdversaryPolicy, n: int = 6, rounds: int = 40, seed: int = 0,
                    s: int = 2, runs: int = 1) -> CheckResult:
    """
    Drive the adversary with random traffic for ``runs`` independent runs; any
    history read past r - tau or broken promise fails the check.
    """
    name = f"audit:{adversary.name}"
    for k in range(runs):
        run_seed = derive_seed(seed, "audit", k)
        density = AUDIT_DENSITIES[k % len(AUDIT_DENSITIES)]
        try:
            net = Network(SimConfig(n=n, s=s, seed=run_seed), adversary)
            for _ in range(rounds):
                tx = net.ledger.random(n) < density
                picks = net.ledger.integers(0, s, size=n)
                net.step([Packet.of(int(picks[v])) if tx[v] else None for v in range(n)])
            net.audit()
        except AuditViolation as exc:
            return CheckResult(name, False, k * rounds, "audit failure", f"run {k} (seed {run_seed}): {exc}")
        except SimError as exc:
            return CheckResult(name, False, k * rounds, type(exc).__name__, f"run {k} (seed {run_seed}): {exc}")
    return CheckResult(name, True, runs * rounds, adversary.describe())


def validate(resolver: Resolver = resolve_round, adversaries: Optional[Sequence[AdversaryPolicy]] = None,
             seed: int = 0, quick: bool = False) -> ValidationReport:
    """Run the whole suite; failures are report content, never exceptions."""
    report = ValidationReport()
    report.checks.append(check_reception(resolver, max_n=4 if quick else 5))
    report.checks.append(check_connectivity(100 if quick else 500, seed))
    report.checks.append(check_field((2, 3, 5, 7) if quick else (2, 3, 5, 7, 257), 50 if quick else 200, seed))
    report.checks.append(check_span(10 if quick else 40, seed))
    for adversary in adversaries if adversaries is not None else default_adversaries():
        report.checks.append(audit_adversary(adversary, seed=seed, runs=5 if quick else 1000))
    for c in report.checks:
        (log.info if c.passed else log.error)("validate %s: %s %s", c.name, "pass" if c.passed else "FAIL", c.detail)
    return report

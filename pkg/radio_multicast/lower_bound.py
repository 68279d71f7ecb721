"""
Hitting-game reduction for store-and-forward multi-message broadcast.

The referee hides R = {(a_i, i)}: a_i is the clique node wired to external
node e_i in an s-clique-star. A player that does not know R can still simulate
any broadcast algorithm on the target network, because the only rounds whose
graph depends on R are the ones with a sole clique transmitter of some M_i,
and for those the player asks the referee whether (transmitter, i) is in R.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple
import logging

import numpy as np

from .adversaries import TargetNetworkAdversary
from .core import Network, Packet, RoundGraph, RoundRecord, SimConfig, canonical_edge
from .errors import ConfigError, DomainError, GameProtocolError, SimulationHalted
from .metrics import Metrics
from .rng import seeded_rng

log = logging.getLogger(__name__)

Guess = Tuple[int, int]


class Verdict(Enum):
    HIT = "hit"
    MISS = "miss"
    WON = "won"


@dataclass
class HittingGameInstance:
    """
    (alpha, beta)-hitting game over the elements 0..alpha+beta-1. The partition
    (A, B) is public; the target set is private to the referee.
    """
    alpha: int
    beta: int
    A: Tuple[int, ...]
    B: Tuple[int, ...]
    _targets: Set[Guess] = field(repr=False)
    _initial: Tuple[int, ...] = field(repr=False)
    guess_log: List[Tuple[Guess, Verdict]] = field(default_factory=list)
    secret_reads: int = 0

    @property
    def won(self) -> bool:
        return not self._targets

    @property
    def remaining(self) -> int:
        return len(self._targets)

    def reveal_targets(self) -> Tuple[int, ...]:
        """(a_0, ..., a_{beta-1}); referee side only, every call is counted."""
        self.secret_reads += 1
        return self._initial


def referee_new(alpha: int, beta: int, seed: int, *, B: Optional[Sequence[int]] = None) -> HittingGameInstance:
    if not 1 <= beta < alpha:
        raise DomainError(f"need 1 <= beta < alpha (got alpha={alpha}, beta={beta})")
    universe = range(alpha + beta)
    b_part = tuple(sorted(int(x) for x in B)) if B is not None else tuple(range(beta))
    if len(set(b_part)) != beta or any(x not in universe for x in b_part):
        raise ConfigError(f"B must hold {beta} distinct elements of 0..{alpha + beta - 1}")
    a_part = tuple(x for x in universe if x not in set(b_part))
    rng = seeded_rng(seed, "referee")
    picked = rng.permutation(rng.choice(np.array(a_part), size=beta, replace=False))
    initial = tuple(int(a) for a in picked)
    return HittingGameInstance(
        alpha=alpha, beta=beta, A=a_part, B=b_part,
        _targets={(a, i) for i, a in enumerate(initial)}, _initial=initial,
    )


def referee_guess(instance: HittingGameInstance, guess: Guess) -> Verdict:
    if instance.won:
        raise GameProtocolError("the game is already won")
    guess = (int(guess[0]), int(guess[1]))
    if guess in instance._targets:
        instance._targets.remove(guess)
        verdict = Verdict.WON if instance.won else Verdict.HIT
    else:
        verdict = Verdict.MISS
    instance.guess_log.append((guess, verdict))
    return verdict


def expected_guesses_uniform(alpha: int, beta: int) -> float:
    """
    Expected guesses of a memoryless player drawing uniformly from A x {0..beta-1},
    from the absorbing chain on the number of targets left.
    """
    size = alpha * beta
    # transient states: j = beta, beta-1, ..., 1 targets left
    Q = np.zeros((beta, beta))
    for k, j in enumerate(range(beta, 0, -1)):
        Q[k, k] = 1 - j / size
        if k + 1 < beta:
            Q[k, k + 1] = j / size
    steps = np.linalg.solve(np.eye(beta) - Q, np.ones(beta))
    return float(steps[0])


def uniform_player(instance: HittingGameInstance, seed: int, max_guesses: int = 10_000_000) -> int:
    """Guess uniformly at random until the game is won; returns the number of guesses."""
    rng = seeded_rng(seed, "player:uniform")
    A = np.array(instance.A)
    guesses = 0
    while not instance.won and guesses < max_guesses:
        x = int(A[rng.integers(len(A))])
        y = int(rng.integers(instance.beta))
        referee_guess(instance, (x, y))
        guesses += 1
    return guesses


@dataclass(frozen=True)
class CliqueStar:
    """
    n - s clique nodes plus s degree-1 externals; ``externals[i]`` is e_i.
    ``bridges`` is None in the player's view.
    """
    n: int
    s: int
    externals: Tuple[int, ...]
    clique: Tuple[int, ...]
    message_holders: Tuple[int, ...]
    bridges: Optional[Tuple[int, ...]] = None

    def bridge_of(self, i: int) -> Optional[int]:
        return None if self.bridges is None else self.bridges[i]

    @property
    def bridge_ids(self) -> FrozenSet[int]:
        return frozenset(self.bridges or ())

    @property
    def internal(self) -> Tuple[int, ...]:
        return tuple(v for v in self.clique if v not in self.bridge_ids)

    def graph(self) -> RoundGraph:
        if self.bridges is None:
            raise GameProtocolError("bridge identities are private to the referee")
        edges = {canonical_edge(u, v) for k, u in enumerate(self.clique) for v in self.clique[k + 1:]}
        edges |= {canonical_edge(e, b) for e, b in zip(self.externals, self.bridges)}
        return RoundGraph(self.n, frozenset(edges))


class GuessingOracle:
    """
    Answers "is w the bridge of e_i?" by guessing (w, i) at the referee. Earlier
    answers are remembered, so a pair is guessed at most once.
    """

    def __init__(self, instance: HittingGameInstance):
        self.instance = instance
        self.answers: Dict[Guess, bool] = {}

    def __call__(self, w: int, i: int) -> bool:
        key = (int(w), int(i))
        if key not in self.answers:
            self.answers[key] = referee_guess(self.instance, key) is not Verdict.MISS
        return self.answers[key]


def build_target_network(instance: HittingGameInstance, n: int, s: int, seed: int, *,
                         public: bool = False) -> Tuple[CliqueStar, TargetNetworkAdversary]:
    """
    Clique-star on the game's elements: clique = A, externals = B, message i
    starts on a random clique node. With ``public`` the bridges are read from the
    referee (ground truth); otherwise the adversary consults a GuessingOracle.
    """
    if instance.alpha != n - s or instance.beta != s:
        raise ConfigError(
            f"game ({instance.alpha}, {instance.beta}) does not match an {n}-node {s}-clique-star")
    rng = seeded_rng(seed, "holders")
    holders = tuple(int(v) for v in rng.choice(np.array(instance.A), size=s, replace=False))
    bridges = instance.reveal_targets() if public else None
    star = CliqueStar(n=n, s=s, externals=tuple(instance.B), clique=tuple(instance.A),
                      message_holders=holders, bridges=bridges)
    if public:
        oracle: Callable[[int, int], bool] = lambda w, i: bridges[i] == w  # noqa: E731
    else:
        oracle = GuessingOracle(instance)
    return star, TargetNetworkAdversary(star.externals, oracle, holders=holders)


def learning_floor(n: int, s: int, c: int, delta: int) -> float:
    """Rounds any store-and-forward algorithm needs under the dual-graph adversary."""
    return n * s / (2 * c * delta)


# An algorithm handle: run(cfg, adversary, net=...) -> Metrics
AlgorithmHandle = Callable[..., Metrics]


@dataclass
class GameTranscript:
    rounds: int
    guesses: int
    won: bool
    receive_histories: List[List[Tuple[int, Tuple[int, ...]]]]
    guess_rounds: List[int] = field(default_factory=list)
    externals_served: bool = False
    violation: Optional[str] = None


def _recorder(n: int):
    histories: List[List[Tuple[int, Tuple[int, ...]]]] = [[] for _ in range(n)]

    def listen(record: RoundRecord) -> None:
        for v, got in enumerate(record.reception):
            if got is not None and isinstance(got.message, Packet):
                histories[v].append((record.round, tuple(sorted(got.message.messages))))
            elif got is not None:
                histories[v].append((record.round, ()))
    return histories, listen


def _served(star: CliqueStar, histories) -> bool:
    for i, e in enumerate(star.externals):
        if not any(i in msgs for _, msgs in histories[e]):
            return False
    return True


def player_from_algorithm(algorithm: AlgorithmHandle, instance: HittingGameInstance, n: int, s: int,
                          *, seed: int = 0, round_limit: int = 1_000_000_000) -> GameTranscript:
    """
    Win the (n-s, s)-hitting game by simulating ``algorithm`` on the target
    network. Guesses only happen in rounds with a sole clique transmitter of a
    single message, so there is at most one per simulated round.
    """
    cfg = SimConfig(n=n, s=s, c=1, seed=seed, round_limit=round_limit)
    star, adversary = build_target_network(instance, n, s, seed)
    histories, listen = _recorder(n)
    guess_rounds: List[int] = []

    def stamp(record: RoundRecord) -> None:
        fresh = len(instance.guess_log) - len(guess_rounds)
        guess_rounds.extend([record.round] * fresh)

    net = Network(cfg, adversary, capacity=1, retain=1024, halt=lambda rec: instance.won)
    net.listeners.extend([listen, stamp])
    violation = None
    try:
        algorithm(cfg, adversary, net=net)
        violation = "algorithm stopped before the game was won"
        log.warning("hitting game: %s (round %d, %d targets left)", violation, net.round, instance.remaining)
    except SimulationHalted:
        log.info("hitting game won in round %d after %d guesses", net.round, len(instance.guess_log))
    return GameTranscript(
        rounds=net.round,
        guesses=len(instance.guess_log),
        won=instance.won,
        receive_histories=histories,
        guess_rounds=guess_rounds,
        externals_served=_served(star, histories),
        violation=violation,
    )


def ground_truth_run(algorithm: AlgorithmHandle, instance: HittingGameInstance, n: int, s: int,
                     *, seed: int = 0, rounds: Optional[int] = None,
                     round_limit: int = 1_000_000_000) -> GameTranscript:
    """The same algorithm on the fully instantiated target network, stopped after ``rounds``."""
    cfg = SimConfig(n=n, s=s, c=1, seed=seed, round_limit=round_limit)
    star, adversary = build_target_network(instance, n, s, seed, public=True)
    histories, listen = _recorder(n)
    halt = (lambda rec: rec.round >= rounds) if rounds is not None else None
    net = Network(cfg, adversary, capacity=1, retain=1024, halt=halt)
    net.listeners.append(listen)
    try:
        algorithm(cfg, adversary, net=net)
    except SimulationHalted:
        pass
    if rounds is not None:
        histories = [[h for h in hist if h[0] <= rounds] for hist in histories]
    return GameTranscript(rounds=net.round, guesses=0, won=False, receive_histories=histories,
                          externals_served=_served(star, histories))

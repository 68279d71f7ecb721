"""
Single-message broadcast building blocks.

Each setting supplies a k-limited procedure (at least min(k, n) nodes informed
with constant probability within a fixed round budget) and a
concurrency-resistant procedure (every node detects whether exactly one
message was broadcast):

  Setting I    infinity-interval connected, 0-oblivious   harmonic broadcast
  Setting II   1-interval connected, 1-oblivious          homogeneous broadcast
  Setting III  T-interval connected, tau-oblivious        psi-phase broadcast, psi = min(tau, T)

Nodes forward the first payload they receive. Payloads are ``Packet`` objects
(broadcast-message IDs) or ``Control.BOTTOM``.
"""
from __future__ import annotations
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple, Union
import logging
import math

import numpy as np

from .core import Control, Extended, Network, Packet, Payload
from .errors import DispatchError, DomainError

log = logging.getLogger(__name__)

ReceiveHook = Callable[[int, Payload, int], None]


class Setting(Enum):
    I = "I"
    II = "II"
    III = "III"


class Detection(Enum):
    SUCCESS = "success"
    FAILURE = "failure"


def harmonic_period(n: int, epsilon: float) -> int:
    if not 0 < epsilon < 1:
        raise DomainError(f"epsilon must lie in (0, 1) (got {epsilon})")
    return math.ceil(12 * math.log(n / epsilon))


def log2_squared(n: int) -> int:
    return math.ceil(math.log2(n) ** 2)


def psi_conn(T: Extended, tau: Extended) -> Extended:
    return min(T, tau)


def select_setting(n: int, T: Extended, tau: Extended) -> Setting:
    """Pick the protocol family for an environment (T, tau)."""
    if math.isinf(T):
        return Setting.I
    if T == 1:
        return Setting.II
    psi = psi_conn(T, tau)
    if psi > n:
        return Setting.I
    if psi < log2_squared(n):
        return Setting.II
    return Setting.III


@dataclass(frozen=True)
class HarmonicClock:
    """Transmit schedule of a node woken in round ``r_v``."""
    r_v: int
    period: int
    epsilon: float = 0.5

    def probability(self, r: int) -> float:
        if r <= self.r_v:
            return 0.0
        return 1.0 / (1 + (r - self.r_v - 1) // self.period)


@dataclass(frozen=True)
class ProtocolParams:
    epsilon: float = 0.5
    harmonic_multiplier: float = 4.0
    harmonic_period: Optional[int] = None
    kappa: float = 3.0
    kappa_psi: float = 8.0
    kappa_pair: float = 4.0
    T: Extended = math.inf
    tau: Extended = math.inf
    elide: bool = True

    def period(self, n: int) -> int:
        return self.harmonic_period or harmonic_period(n, self.epsilon)


@dataclass
class SingleBcastOutcome:
    informed: FrozenSet[int]
    rounds_used: int
    isolation_log: List[int] = field(default_factory=list)
    busy_rounds: int = 0
    elided_rounds: int = 0
    detection: Optional[Tuple[Detection, ...]] = None
    result: Optional[int] = None

    @property
    def consistent(self) -> bool:
        """Detection is unanimous (always true for plain k-limited runs)."""
        return self.detection is None or len(set(self.detection)) == 1


class FloodState:
    """Per-node state of one subroutine instance."""

    def __init__(self, n: int):
        self.n = n
        self.payload: List[Optional[Payload]] = [None] * n
        self.wake = np.full(n, np.inf)
        self.heard: List[Set[Payload]] = [set() for _ in range(n)]
        self.bottom = np.zeros(n, dtype=bool)

    @property
    def informed(self) -> np.ndarray:
        return np.isfinite(self.wake)

    def seed(self, v: int, payload: Payload) -> None:
        self.payload[v] = payload
        self.wake[v] = 0
        self._note(v, payload)

    def take(self, v: int, payload: Payload, t: int) -> None:
        if self.payload[v] is None:
            self.payload[v] = payload
            self.wake[v] = t
        self._note(v, payload)

    def _note(self, v: int, payload: Payload) -> None:
        if payload is Control.BOTTOM:
            self.bottom[v] = True
        else:
            self.heard[v].add(payload)

    def saturated(self) -> bool:
        """Everybody forwards the same payload, so further rounds change nothing."""
        if not self.informed.all():
            return False
        first = self.payload[0]
        return all(p == first for p in self.payload)

    def informed_set(self) -> FrozenSet[int]:
        return frozenset(int(v) for v in np.flatnonzero(self.informed))


class Schedule(ABC):
    """Per-round transmit probabilities of one subroutine."""

    @abstractmethod
    def probabilities(self, t: int, state: FloodState) -> np.ndarray:
        ...

    def idle(self, state: FloodState) -> bool:
        """True when no node can transmit for the rest of the run."""
        return not state.informed.any()


class HarmonicSchedule(Schedule):

    def __init__(self, period: int):
        self.period = period

    def probabilities(self, t: int, state: FloodState) -> np.ndarray:
        p = np.zeros(state.n)
        awake = state.wake < t
        p[awake] = 1.0 / (1 + (t - state.wake[awake] - 1) // self.period)
        return p


class HomogeneousSchedule(Schedule):

    def __init__(self, n: int):
        self.p = math.log(n) / n

    def probabilities(self, t: int, state: FloodState) -> np.ndarray:
        return np.where(state.wake < t, self.p, 0.0)


class PairingSchedule(Schedule):
    """Nodes holding exactly one distinct message repeat it with probability 1/n."""

    def __init__(self, n: int):
        self.p = 1.0 / n

    def _single(self, state: FloodState) -> np.ndarray:
        return np.array([len(h) == 1 for h in state.heard])

    def probabilities(self, t: int, state: FloodState) -> np.ndarray:
        return np.where(self._single(state), self.p, 0.0)

    def idle(self, state: FloodState) -> bool:
        return not self._single(state).any()


class PsiPhaseSchedule(Schedule):
    """
    Phases of psi rounds. First half: every informed node transmits with
    probability 1/n. Second half: nodes first informed during the current phase
    run a harmonic clock restarted at the phase midpoint; everyone else listens.
    """

    def __init__(self, n: int, psi: int, period: int):
        self.n = n
        self.psi = psi
        self.half = math.ceil(psi / 2)
        self.period = period

    def probabilities(self, t: int, state: FloodState) -> np.ndarray:
        start = ((t - 1) // self.psi) * self.psi
        offset = t - start
        wake = state.wake
        if offset <= self.half:
            return np.where(wake < t, 1.0 / self.n, 0.0)
        mid = start + self.half
        fresh = (wake > start) | ((start == 0) & (wake == 0))
        hat = np.maximum(mid, np.where(np.isfinite(wake), wake, 0))
        p = np.zeros(state.n)
        active = fresh & np.isfinite(wake) & (hat < t)
        p[active] = 1.0 / (1 + (t - hat[active] - 1) // self.period)
        return p


def flood(
    net: Network,
    schedule: Schedule,
    budget: int,
    state: FloodState,
    *,
    on_receive: Optional[ReceiveHook] = None,
    elide: bool = True,
) -> SingleBcastOutcome:
    """Run one subroutine instance for exactly ``budget`` rounds of ``net``."""
    isolation: List[int] = []
    busy = 0
    elided = 0
    for t in range(1, budget + 1):
        if elide and (schedule.idle(state) or state.saturated()):
            rest = budget - t + 1
            net.skip(rest)
            elided += rest
            break
        p = schedule.probabilities(t, state)
        if p.sum() >= 1.0:
            busy += 1
        draws = net.ledger.random(state.n)
        tx = draws < p
        intents = [state.payload[v] if tx[v] else None for v in range(state.n)]
        reception = net.step(intents)
        if tx.sum() == 1:
            isolation.append(net.round)
        for v, got in enumerate(reception):
            if got is None:
                continue
            state.take(v, got.message, t)
            if on_receive is not None:
                on_receive(v, got.message, net.round)
    return SingleBcastOutcome(
        informed=state.informed_set(),
        rounds_used=budget,
        isolation_log=isolation,
        busy_rounds=busy,
        elided_rounds=elided,
    )


def _initiators(sources: Union[Mapping[int, Payload], Iterable[int]]) -> Dict[int, Payload]:
    if isinstance(sources, Mapping):
        return dict(sources)
    return {int(v): Packet.of(0) for v in sources}


def _seeded(n: int, initiators: Mapping[int, Payload]) -> FloodState:
    state = FloodState(n)
    for v, payload in initiators.items():
        state.seed(v, payload)
    return state


def _check_k(k: int) -> None:
    if k < 1:
        raise DomainError(f"k must be >= 1 (got {k})")


# --- budgets ---------------------------------------------------------------

def harmonic_budget(n: int, k: int, params: ProtocolParams) -> int:
    return math.ceil(params.harmonic_multiplier * k * params.period(n) * (math.log(n) + 1))


def homogeneous_budget(n: int, k: int, params: ProtocolParams) -> int:
    return math.ceil(params.kappa * k * n / math.log(n))


def pairing_budget(n: int, params: ProtocolParams) -> int:
    return math.ceil(params.kappa_pair * n * math.log(n))


def psi_in_band(n: int, T: Extended, tau: Extended) -> int:
    """psi = min(tau, T) if the psi-phase protocol applies, else DispatchError."""
    psi = psi_conn(T, tau)
    low = log2_squared(n)
    if math.isinf(psi) or psi > n:
        raise DispatchError(
            f"psi=min(tau, T)={psi} exceeds n={n}: use the Setting I (harmonic) protocols")
    if psi < low:
        raise DispatchError(
            f"psi=min(tau, T)={psi} is below ceil(log2(n)^2)={low}: use the Setting II (homogeneous) protocols")
    return int(psi)


def psi_phase_budget(n: int, k: int, psi: int, params: ProtocolParams) -> int:
    lg = math.log2(n)
    if k <= n / 2:
        phases = math.ceil(params.kappa_psi * k * n * lg ** 2 / psi ** 2)
    else:
        phases = math.ceil(params.kappa_psi * n ** 2 * lg ** 3 / psi ** 2)
    return phases * psi


# --- k-limited procedures --------------------------------------------------

def harmonic_k_limited(net: Network, sources, k: int, params: ProtocolParams = ProtocolParams(),
                       *, on_receive: Optional[ReceiveHook] = None) -> SingleBcastOutcome:
    _check_k(k)
    n = net.n
    state = _seeded(n, _initiators(sources))
    return flood(net, HarmonicSchedule(params.period(n)), harmonic_budget(n, k, params), state,
                 on_receive=on_receive, elide=params.elide)


def homogeneous_k_limited(net: Network, sources, k: int, params: ProtocolParams = ProtocolParams(),
                          *, on_receive: Optional[ReceiveHook] = None) -> SingleBcastOutcome:
    _check_k(k)
    n = net.n
    state = _seeded(n, _initiators(sources))
    return flood(net, HomogeneousSchedule(n), homogeneous_budget(n, k, params), state,
                 on_receive=on_receive, elide=params.elide)


def psi_phase_k_limited(net: Network, sources, k: int, T: Extended, tau: Extended,
                        params: ProtocolParams = ProtocolParams(),
                        *, on_receive: Optional[ReceiveHook] = None) -> SingleBcastOutcome:
    _check_k(k)
    n = net.n
    psi = psi_in_band(n, T, tau)
    state = _seeded(n, _initiators(sources))
    return flood(net, PsiPhaseSchedule(n, psi, params.period(n)), psi_phase_budget(n, k, psi, params),
                 state, on_receive=on_receive, elide=params.elide)


# --- concurrency-resistant wrappers ----------------------------------------

def _detect(state: FloodState, alarm: FloodState) -> Tuple[Detection, ...]:
    return tuple(
        Detection.SUCCESS if len(state.heard[v]) == 1 and not alarm.bottom[v] else Detection.FAILURE
        for v in range(state.n)
    )


def _merge(parts: List[SingleBcastOutcome], informed: FrozenSet[int],
           detection: Tuple[Detection, ...]) -> SingleBcastOutcome:
    result = int(all(d is Detection.SUCCESS for d in detection))
    out = SingleBcastOutcome(
        informed=informed,
        rounds_used=sum(p.rounds_used for p in parts),
        isolation_log=[r for p in parts for r in p.isolation_log],
        busy_rounds=sum(p.busy_rounds for p in parts),
        elided_rounds=sum(p.elided_rounds for p in parts),
        detection=detection,
        result=result,
    )
    if not out.consistent:
        log.warning("non-unanimous detection: %d of %d nodes detected success",
                    sum(d is Detection.SUCCESS for d in detection), len(detection))
    return out


def _concurrency_resistant(net: Network, sources, make_schedule: Callable[[], Schedule], budget: int,
                           params: ProtocolParams, pairing: bool,
                           on_receive: Optional[ReceiveHook]) -> SingleBcastOutcome:
    n = net.n
    state = _seeded(n, _initiators(sources))
    parts = [flood(net, make_schedule(), budget, state, on_receive=on_receive, elide=params.elide)]
    if pairing:
        parts.append(flood(net, PairingSchedule(n), pairing_budget(n, params), state,
                           on_receive=on_receive, elide=params.elide))
    witnesses = {v: Control.BOTTOM for v in range(n) if len(state.heard[v]) >= 2}
    alarm = _seeded(n, witnesses)
    parts.append(flood(net, make_schedule(), budget, alarm, elide=params.elide))
    log.debug("concurrency-resistant run: %d sources, %d witnesses", len(_initiators(sources)), len(witnesses))
    return _merge(parts, state.informed_set(), _detect(state, alarm))


def harmonic_concurrency_resistant(net: Network, sources, params: ProtocolParams = ProtocolParams(),
                                   *, on_receive: Optional[ReceiveHook] = None) -> SingleBcastOutcome:
    n = net.n
    return _concurrency_resistant(net, sources, lambda: HarmonicSchedule(params.period(n)),
                                  harmonic_budget(n, n, params), params, False, on_receive)


def homogeneous_concurrency_resistant(net: Network, sources, params: ProtocolParams = ProtocolParams(),
                                      *, on_receive: Optional[ReceiveHook] = None) -> SingleBcastOutcome:
    n = net.n
    return _concurrency_resistant(net, sources, lambda: HomogeneousSchedule(n),
                                  homogeneous_budget(n, n, params), params, True, on_receive)


def psi_phase_concurrency_resistant(net: Network, sources, T: Extended, tau: Extended,
                                    params: ProtocolParams = ProtocolParams(),
                                    *, on_receive: Optional[ReceiveHook] = None) -> SingleBcastOutcome:
    n = net.n
    psi = psi_in_band(n, T, tau)
    return _concurrency_resistant(net, sources, lambda: PsiPhaseSchedule(n, psi, params.period(n)),
                                  psi_phase_budget(n, n, psi, params), params, True, on_receive)


# --- setting-level handles -------------------------------------------------

class KLimited:
    """k-limited procedure of one setting, with its round budget."""

    def __init__(self, setting: Setting, params: ProtocolParams = ProtocolParams()):
        self.setting = setting
        self.params = params

    def budget(self, n: int, k: int) -> int:
        if self.setting is Setting.I:
            return harmonic_budget(n, k, self.params)
        if self.setting is Setting.II:
            return homogeneous_budget(n, k, self.params)
        psi = psi_in_band(n, self.params.T, self.params.tau)
        return psi_phase_budget(n, k, psi, self.params)

    def __call__(self, net: Network, sources, k: int, *,
                 on_receive: Optional[ReceiveHook] = None) -> SingleBcastOutcome:
        if self.setting is Setting.I:
            return harmonic_k_limited(net, sources, k, self.params, on_receive=on_receive)
        if self.setting is Setting.II:
            return homogeneous_k_limited(net, sources, k, self.params, on_receive=on_receive)
        return psi_phase_k_limited(net, sources, k, self.params.T, self.params.tau, self.params,
                                   on_receive=on_receive)


class ConcurrencyResistant:
    """Concurrency-resistant procedure of one setting; returns result 1 iff all nodes detect success."""

    def __init__(self, setting: Setting, params: ProtocolParams = ProtocolParams()):
        self.setting = setting
        self.params = params

    def budget(self, n: int) -> int:
        p = self.params
        if self.setting is Setting.I:
            return 2 * harmonic_budget(n, n, p)
        if self.setting is Setting.II:
            return 2 * homogeneous_budget(n, n, p) + pairing_budget(n, p)
        psi = psi_in_band(n, p.T, p.tau)
        return 2 * psi_phase_budget(n, n, psi, p) + pairing_budget(n, p)

    def __call__(self, net: Network, sources, *,
                 on_receive: Optional[ReceiveHook] = None) -> SingleBcastOutcome:
        if self.setting is Setting.I:
            return harmonic_concurrency_resistant(net, sources, self.params, on_receive=on_receive)
        if self.setting is Setting.II:
            return homogeneous_concurrency_resistant(net, sources, self.params, on_receive=on_receive)
        return psi_phase_concurrency_resistant(net, sources, self.params.T, self.params.tau, self.params,
                                               on_receive=on_receive)


def limited_broadcast(setting: Setting, params: ProtocolParams = ProtocolParams()) -> KLimited:
    return KLimited(setting, params)


def concurrency_resistant(setting: Setting, params: ProtocolParams = ProtocolParams()) -> ConcurrencyResistant:
    return ConcurrencyResistant(setting, params)

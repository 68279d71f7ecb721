"""
Experiment orchestration: protocol registry, grid sweeps to CSV, hitting-game
trials and least-squares scaling fits over sweep results.
"""
from __future__ import annotations
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
import pandas as pd

from .adversaries import ADVERSARY_NAMES, AdversaryPolicy, StrongDualGraphAdversary, make_adversary
from .core import Extended, Network, Packet, RoundRecord, SimConfig
from .errors import ConfigError, DomainError, FitError, InvariantViolation, RoundLimitExceeded, SimError
from .lower_bound import (
    expected_guesses_uniform, ground_truth_run, learning_floor, player_from_algorithm,
    referee_new, uniform_player,
)
from .metrics import CSV_COLUMNS, CSV_SCHEMA_VERSION, METRIC_COLUMNS, PHASE_COLUMNS, Metrics
from .multicast import HISTORY_RETAIN, KnowledgeState, algorithm1_multicast, algorithm2_multicast
from .protocols import (
    ProtocolParams, Setting, concurrency_resistant, limited_broadcast, select_setting,
)
from .rlnc import rlnc_broadcast
from .rng import derive_seed

log = logging.getLogger(__name__)

PROTOCOLS: Dict[str, str] = {
    "alg1": "k-limited broadcasts with doubling k, random c-subsets",
    "alg2": "one message per successful concurrency-resistant broadcast",
    "rlnc": "random linear network coding over F_q",
    "cr-single": "one concurrency-resistant broadcast from the s sources",
    "k-limited": "one k-limited broadcast from the s sources",
}

SETTING_CHOICES = ("auto", "I", "II", "III")
TRACE_COLUMNS = ["round", "transmitters", "edges", "receptions"]


def _check_name(kind: str, name: str, valid: Sequence[str]) -> None:
    if name not in valid:
        raise ConfigError(f"unknown {kind} {name!r}; valid names: {', '.join(valid)}")


def resolve_setting(choice: str, n: int, T: Extended, tau: Extended) -> Setting:
    if choice == "auto":
        return select_setting(n, T, tau)
    _check_name("setting", choice, SETTING_CHOICES)
    return Setting[choice]


class TraceRecorder:
    """Network listener keeping one row per simulated round."""

    def __init__(self):
        self.rows: List[Dict[str, Any]] = []

    def __call__(self, record: RoundRecord) -> None:
        self.rows.append({
            "round": record.round,
            "transmitters": " ".join(str(v) for v in record.transmitters),
            "edges": len(record.graph.edges),
            "receptions": " ".join(f"{v}<{got.sender}" for v, got in enumerate(record.reception)
                                   if got is not None),
        })

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=TRACE_COLUMNS)


@dataclass
class RunOptions:
    """Protocol knobs that are not part of SimConfig."""
    setting: str = "auto"
    params: ProtocolParams = field(default_factory=ProtocolParams)
    alpha: float = 24.0
    q: int = 257
    payload_len: Optional[int] = None
    kappa_rlnc: float = 4.0
    k: Optional[int] = None
    phase_cap: Optional[int] = None


def _single_broadcast(protocol: str, net: Network, cfg: SimConfig, adversary: AdversaryPolicy,
                      setting: Setting, opts: RunOptions) -> Metrics:
    knowledge = KnowledgeState.assign(cfg.n, cfg.s, cfg.seed, adversary.preferred_sources(cfg.s))
    initiators = {v: Packet.of(i) for i, v in enumerate(knowledge.sources)}
    metrics = Metrics(protocol=protocol)
    try:
        if protocol == "cr-single":
            out = concurrency_resistant(setting, opts.params)(net, initiators, on_receive=knowledge.absorb)
        else:
            k = opts.k or cfg.n
            out = limited_broadcast(setting, opts.params)(net, initiators, k, on_receive=knowledge.absorb)
    except RoundLimitExceeded as exc:
        metrics.truncated = True
        log.warning("%s truncated: %s", protocol, exc)
        metrics.absorb_network(net)
        knowledge.fill(metrics)
        metrics.success = False
        return metrics
    metrics.absorb_network(net)
    knowledge.fill(metrics)
    metrics.phases = 1
    metrics.busy_rounds = out.busy_rounds
    metrics.consistent = out.consistent
    if protocol == "cr-single":
        expected = int(len(initiators) == 1)
        metrics.success = out.consistent and out.result == expected
        metrics.extra["result"] = out.result
    else:
        metrics.success = len(out.informed) >= min(opts.k or cfg.n, cfg.n)
    metrics.extra["informed"] = len(out.informed)
    return metrics


def run_protocol(protocol: str, cfg: SimConfig, adversary: AdversaryPolicy, *,
                 T: Extended = math.inf, tau: Extended = math.inf,
                 opts: Optional[RunOptions] = None,
                 trace: Optional[TraceRecorder] = None) -> Metrics:
    """
    One run of ``protocol`` on a fresh network. Afterwards the adversary's
    interval-connectivity promise is audited; under the strong dual-graph
    adversary the per-round learning bound is checked as well.
    """
    _check_name("protocol", protocol, tuple(PROTOCOLS))
    opts = opts or RunOptions()
    capacity = None if protocol == "rlnc" else cfg.c
    net = Network(cfg, adversary, capacity=capacity, retain=HISTORY_RETAIN)
    if trace is not None:
        net.listeners.append(trace)
    setting = None
    if protocol != "rlnc":
        setting = resolve_setting(opts.setting, cfg.n, T, tau)
        params = replace(opts.params, T=T, tau=tau)
        opts = replace(opts, params=params)

    if protocol == "alg1":
        metrics = algorithm1_multicast(limited_broadcast(setting, opts.params), cfg, adversary,
                                       alpha=opts.alpha, net=net)
    elif protocol == "alg2":
        metrics = algorithm2_multicast(concurrency_resistant(setting, opts.params), cfg, adversary,
                                       phase_cap=opts.phase_cap, net=net)
    elif protocol == "rlnc":
        metrics = rlnc_broadcast(cfg, adversary, q=opts.q, payload_len=opts.payload_len,
                                 kappa=opts.kappa_rlnc, elide=opts.params.elide, net=net)
    else:
        metrics = _single_broadcast(protocol, net, cfg, adversary, setting, opts)
    net.audit()
    metrics.extra["setting"] = setting.name if setting is not None else ""

    if isinstance(adversary, StrongDualGraphAdversary) and protocol in ("alg1", "alg2"):
        delta = adversary.stable.max_degree
        if metrics.max_learning > cfg.c * delta:
            raise InvariantViolation(
                f"{metrics.max_learning} learning events in one round exceed c*Delta={cfg.c * delta}")
        metrics.extra["learning_floor"] = learning_floor(cfg.n, cfg.s, cfg.c, delta)
    return metrics


@dataclass
class ExperimentSpec:
    protocol: str
    adversary: str
    n: List[int]
    s: List[int] = field(default_factory=lambda: [1])
    c: List[int] = field(default_factory=lambda: [1])
    T: List[Extended] = field(default_factory=lambda: [math.inf])
    tau: List[Extended] = field(default_factory=lambda: [math.inf])
    trials: int = 1
    seed: int = 0
    out: Optional[str] = None
    phases_out: Optional[str] = None
    options: RunOptions = field(default_factory=RunOptions)
    extra_p: float = 0.0
    round_limit: int = 1_000_000_000
    B: int = 1

    def __post_init__(self):
        _check_name("protocol", self.protocol, tuple(PROTOCOLS))
        _check_name("adversary", self.adversary, ADVERSARY_NAMES)
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1 (got {self.trials})")
        for name in ("n", "s", "c", "T", "tau"):
            if not getattr(self, name):
                raise ConfigError(f"grid dimension {name} is empty")

    @classmethod
    def from_config(cls, config) -> "ExperimentSpec":
        """Build a spec from a ``config.Config``."""
        return cls(
            protocol=config.protocol,
            adversary=config.adversary,
            n=list(config.n),
            s=list(config.s),
            c=list(config.c),
            T=list(config.T),
            tau=list(config.tau),
            trials=config.trials,
            seed=config.seed,
            out=config.out,
            phases_out=config.phases_out,
            options=RunOptions(
                setting=config.setting,
                params=ProtocolParams(
                    epsilon=config.epsilon,
                    harmonic_multiplier=config.harmonic_multiplier,
                    harmonic_period=config.harmonic_period,
                    kappa=config.kappa,
                    kappa_psi=config.kappa_psi,
                    kappa_pair=config.kappa_pair,
                    elide=config.elide,
                ),
                alpha=config.alpha,
                q=config.q,
                payload_len=config.payload_len,
                kappa_rlnc=config.kappa_rlnc,
            ),
            extra_p=config.extra_p,
            round_limit=config.round_limit,
            B=config.B,
        )

    def cells(self) -> List[Tuple[int, int, int, Extended, Extended]]:
        return list(product(self.n, self.s, self.c, self.T, self.tau))


def _cell_seed(base: int, cell: Tuple, trial: int) -> int:
    return derive_seed(base, "cell", *cell, "trial", trial)


def run_cell(spec: ExperimentSpec, cell: Tuple, trial: int,
             trace: Optional[TraceRecorder] = None) -> Tuple[Dict[str, Any], Optional[Metrics]]:
    """One (cell, trial); errors become an error-coded row."""
    n, s, c, T, tau = cell
    seed = _cell_seed(spec.seed, cell, trial)
    row: Dict[str, Any] = {
        "schema_version": CSV_SCHEMA_VERSION, "protocol": spec.protocol, "adversary": spec.adversary,
        "setting": "", "n": n, "s": s, "c": c, "T": T, "tau": tau, "trial": trial, "seed": seed,
    }
    try:
        cfg = SimConfig(n=n, s=s, c=c, B=spec.B, seed=seed, round_limit=spec.round_limit)
        adversary = make_adversary(spec.adversary, n, s=s, T=T, tau=tau, extra_p=spec.extra_p, seed=seed)
        metrics = run_protocol(spec.protocol, cfg, adversary, T=T, tau=tau, opts=spec.options, trace=trace)
    except (SimError, ValueError) as exc:
        log.warning("cell n=%s s=%s c=%s T=%s tau=%s trial=%d failed: %s: %s",
                    n, s, c, T, tau, trial, type(exc).__name__, exc)
        row.update({name: math.nan for name in METRIC_COLUMNS})
        row["error"] = type(exc).__name__
        return row, None
    row["setting"] = metrics.extra.get("setting", "")
    row.update(metrics.row())
    row["error"] = ""
    return row, metrics


def run_experiment(spec: ExperimentSpec) -> pd.DataFrame:
    """
    trials x grid cells, one CSV row per trial. Seeds are derived from the base
    seed, the cell parameters and the trial index, so the output is
    deterministic and adding grid values leaves other cells' rows unchanged.
    """
    rows: List[Dict[str, Any]] = []
    phase_rows: List[Dict[str, Any]] = []
    cells = spec.cells()
    log.info("experiment: %s on %s, %d cells x %d trials", spec.protocol, spec.adversary, len(cells), spec.trials)
    for cell in cells:
        for trial in range(spec.trials):
            row, metrics = run_cell(spec, cell, trial)
            rows.append(row)
            if metrics is not None:
                for p in metrics.phase_table():
                    phase_rows.append({"trial": trial, "seed": row["seed"], "n": row["n"], "s": row["s"],
                                       "c": row["c"], **p})
        log.info("cell n=%s s=%s c=%s T=%s tau=%s done", *cell)
    df = pd.DataFrame(rows, columns=CSV_COLUMNS)
    if spec.out:
        df.to_csv(spec.out, index=False)
        log.info("wrote %d rows to %s", len(df), spec.out)
    if spec.phases_out:
        pd.DataFrame(phase_rows, columns=PHASE_COLUMNS).to_csv(spec.phases_out, index=False)
        log.info("wrote %d phase rows to %s", len(phase_rows), spec.phases_out)
    return df


# --- hitting game ------------------------------------------------------------

HITGAME_COLUMNS = ["trial", "seed", "n", "s", "protocol", "rounds", "guesses", "won", "replay_match", "violation"]


def hitgame_algorithm(protocol: str, n: int, opts: Optional[RunOptions] = None) -> Callable[..., Metrics]:
    """A store-and-forward algorithm in the (cfg, adversary, net=...) shape the player simulates."""
    opts = opts or RunOptions()
    if protocol not in ("alg1", "alg2"):
        raise ConfigError(f"the hitting-game player simulates alg1 or alg2 (got {protocol!r})")
    setting = resolve_setting(opts.setting, n, math.inf, 0)
    params = replace(opts.params, T=math.inf, tau=0)
    if protocol == "alg1":
        limited = limited_broadcast(setting, params)
        return lambda cfg, adversary, net=None: algorithm1_multicast(limited, cfg, adversary,
                                                                    alpha=opts.alpha, net=net)
    cr = concurrency_resistant(setting, params)
    return lambda cfg, adversary, net=None: algorithm2_multicast(cr, cfg, adversary,
                                                                phase_cap=opts.phase_cap, net=net)


def hitgame_trials(protocol: str, n: int, s: int, trials: int, seed: int = 0, *,
                   opts: Optional[RunOptions] = None, replay: bool = True,
                   round_limit: int = 1_000_000_000) -> pd.DataFrame:
    """
    Let the player built from ``protocol`` win (n-s, s)-hitting games. With
    ``replay`` each transcript is compared against the ground-truth run halted
    at the same round.
    """
    algorithm = hitgame_algorithm(protocol, n, opts)
    rows = []
    for trial in range(trials):
        trial_seed = derive_seed(seed, "hitgame", n, s, trial)
        instance = referee_new(n - s, s, trial_seed)
        transcript = player_from_algorithm(algorithm, instance, n, s, seed=trial_seed, round_limit=round_limit)
        match = math.nan
        if replay:
            truth = ground_truth_run(algorithm, referee_new(n - s, s, trial_seed), n, s,
                                     seed=trial_seed, rounds=transcript.rounds, round_limit=round_limit)
            match = int(truth.receive_histories == transcript.receive_histories)
        rows.append({"trial": trial, "seed": trial_seed, "n": n, "s": s, "protocol": protocol,
                     "rounds": transcript.rounds, "guesses": transcript.guesses, "won": int(transcript.won),
                     "replay_match": match, "violation": transcript.violation or ""})
        log.info("hitgame trial %d: won=%s rounds=%d guesses=%d", trial, transcript.won,
                 transcript.rounds, transcript.guesses)
    return pd.DataFrame(rows, columns=HITGAME_COLUMNS)


UNIFORM_COLUMNS = ["trial", "guesses", "rounds", "won"]


def uniform_trials(alpha: int, beta: int, trials: int, seed: int = 0) -> pd.DataFrame:
    """One row per uniform-player game; the player makes one guess per round."""
    rows = []
    for t in range(trials):
        instance = referee_new(alpha, beta, derive_seed(seed, "uniform", t))
        guesses = uniform_player(instance, derive_seed(seed, "guess", t))
        rows.append({"trial": t, "guesses": guesses, "rounds": guesses, "won": int(instance.won)})
    return pd.DataFrame(rows, columns=UNIFORM_COLUMNS)


def uniform_calibration(alpha: int, beta: int, trials: int, seed: int = 0,
                        frame: Optional[pd.DataFrame] = None) -> Dict[str, float]:
    """Mean guesses of the uniform player against the exact expectation."""
    if frame is None:
        frame = uniform_trials(alpha, beta, trials, seed)
    exact = expected_guesses_uniform(alpha, beta)
    mean = float(frame["guesses"].mean())
    return {"alpha": alpha, "beta": beta, "trials": len(frame), "mean": mean, "exact": exact,
            "relative_error": abs(mean - exact) / exact}


# --- scaling fits --------------------------------------------------------------

GRID_KEYS = ["n", "s", "c", "T", "tau"]


@dataclass
class FitResult:
    terms: List[str]
    coefficients: Dict[str, float]
    r_squared: float
    residuals: np.ndarray
    cells: pd.DataFrame

    def render(self) -> str:
        lines = [f"{'term':<16}{'coefficient':>16}", "-" * 32]
        for term in self.terms:
            lines.append(f"{term:<16}{self.coefficients[term]:>16.6g}")
        lines.append("-" * 32)
        lines.append(f"{'R^2':<16}{self.r_squared:>16.6f}")
        lines.append(f"{'cells':<16}{len(self.cells):>16d}")
        return "\n".join(lines)


def parse_model(model: str) -> List[str]:
    terms = [t.strip() for t in model.split("+")]
    if not terms or any(not t for t in terms):
        raise ConfigError(f"cannot parse model {model!r}; expected terms joined by '+'")
    if len(set(terms)) != len(terms):
        raise ConfigError(f"model {model!r} repeats a term")
    return terms


def _design(cells: pd.DataFrame, terms: List[str]) -> np.ndarray:
    frame = cells[GRID_KEYS].astype(float).copy()
    frame["psi"] = np.minimum(frame["T"], frame["tau"])
    frame["log_n"] = np.log(frame["n"])
    cols = []
    for term in terms:
        if term == "1":
            cols.append(np.ones(len(frame)))
            continue
        try:
            value = frame.eval(term)
        except Exception as exc:
            raise ConfigError(f"cannot evaluate model term {term!r}: {exc}") from exc
        cols.append(np.broadcast_to(np.asarray(value, dtype=float), (len(frame),)))
    X = np.column_stack(cols)
    if not np.isfinite(X).all():
        raise FitError("design matrix has non-finite entries (psi = inf in a psi term?)")
    return X


def _collinear(X: np.ndarray, terms: List[str]) -> List[str]:
    bad = []
    kept: List[int] = []
    for j in range(X.shape[1]):
        trial = kept + [j]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            kept = trial
        else:
            bad.append(terms[j])
    return bad


def fit_scaling(df: pd.DataFrame, model: str = "1 + n**2 + n*s", response: str = "completion_round") -> FitResult:
    """
    Least-squares fit of the per-cell median of ``response`` against ``model``,
    a '+'-separated list of terms over n, s, c, T, tau, psi and log_n ("1" is
    the intercept).
    """
    terms = parse_model(model)
    if response not in df.columns:
        raise ConfigError(f"dataset has no column {response!r}")
    data = df
    if "error" in data.columns:
        data = data[data["error"].fillna("") == ""]
    data = data.dropna(subset=[response])
    cells = data.groupby(GRID_KEYS, as_index=False)[response].median()
    if len(cells) < 3:
        raise DomainError(f"fit needs at least 3 distinct grid cells (got {len(cells)})")
    X = _design(cells, terms)
    y = cells[response].to_numpy(dtype=float)
    if np.linalg.matrix_rank(X) < len(terms):
        raise FitError(f"rank-deficient design; collinear terms: {', '.join(_collinear(X, terms))}")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    residuals = y - X @ coef
    ss_res = float(residuals @ residuals)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-12 * max(1.0, float(y @ y)) else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    log.info("fit %s ~ %s over %d cells: R^2=%.4f", response, model, len(cells), r2)
    return FitResult(terms=terms, coefficients=dict(zip(terms, (float(v) for v in coef))),
                     r_squared=r2, residuals=residuals, cells=cells)

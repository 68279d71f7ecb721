"""
Command-line entry point: simulate, sweep, hitgame, validate, fit.
"""
from __future__ import annotations
from typing import List, Optional
import argparse
import logging
import math
import sys

import pandas as pd

from radio_multicast.adversaries import ADVERSARY_NAMES, make_adversary
from radio_multicast.config import Config, load_config, parse_extended_grid, parse_int_grid
from radio_multicast.core import SimConfig
from radio_multicast.errors import ConfigError, DomainError, FitError
from radio_multicast.experiments import (
    PROTOCOLS, SETTING_CHOICES, ExperimentSpec, TraceRecorder, fit_scaling, hitgame_trials,
    run_experiment, run_protocol, uniform_calibration, uniform_trials,
)
from radio_multicast.validation import validate

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2


def _grid_arg(parse, name):
    def convert(text: str):
        try:
            return parse(text, f"--{name}")
        except ConfigError as exc:
            raise argparse.ArgumentTypeError(str(exc))
    return convert


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="YAML config file (schema_version 1)")
    p.add_argument("--log-level", default=None, help="Override LOG_LEVEL (e.g., DEBUG)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--protocol", default=None, choices=list(PROTOCOLS))
    p.add_argument("--adversary", default=None, choices=list(ADVERSARY_NAMES))
    p.add_argument("--setting", default=None, choices=list(SETTING_CHOICES))
    p.add_argument("--n", type=_grid_arg(parse_int_grid, "n"), default=None, help="e.g. 8 or 8,16,32")
    p.add_argument("--s", type=_grid_arg(parse_int_grid, "s"), default=None)
    p.add_argument("--c", type=_grid_arg(parse_int_grid, "c"), default=None)
    p.add_argument("--T", type=_grid_arg(parse_extended_grid, "T"), default=None, help="integer or inf")
    p.add_argument("--tau", type=_grid_arg(parse_extended_grid, "tau"), default=None, help="integer or inf")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--round-limit", type=int, default=None)
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--no-elide", action="store_true", help="Simulate silent rounds instead of skipping them")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radio-sim", description="Multi-message broadcast in adversarial dynamic radio networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="One run with a summary table")
    _add_common(p)
    p.add_argument("--trace", default=None, help="Write the per-round event log to this CSV")

    p = sub.add_parser("sweep", help="Grid x trials to CSV")
    _add_common(p)
    p.add_argument("--phases-out", default=None, help="Per-phase progress rows CSV")

    p = sub.add_parser("hitgame", help="Win hitting games with a simulated algorithm")
    _add_common(p)
    p.add_argument("--no-replay", action="store_true", help="Skip the ground-truth comparison")
    p.add_argument("--uniform", nargs=2, type=int, metavar=("ALPHA", "BETA"), default=None,
                   help="Calibrate the referee with the uniform random player instead")

    p = sub.add_parser("validate", help="Run the invariant suite")
    p.add_argument("--log-level", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quick", action="store_true", help="Smaller exhaustive ranges")

    p = sub.add_parser("fit", help="Fit median rounds per cell of a sweep CSV")
    p.add_argument("csv", help="Sweep CSV")
    p.add_argument("--model", default="1 + n**2 + n*s", help="Terms over n, s, c, T, tau, psi, log_n")
    p.add_argument("--response", default="completion_round")
    p.add_argument("--log-level", default=None)
    p.add_argument("--config", default=None)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = ["seed", "protocol", "adversary", "setting", "n", "s", "c", "T", "tau", "trials",
            "round_limit", "out", "trace", "phases_out"]
    out = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "no_elide", False):
        out["elide"] = False
    return out


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "-"
        return "inf" if math.isinf(x) else f"{x:.4g}"
    return str(x)


def cmd_simulate(cfg: Config) -> int:
    if any(len(getattr(cfg, k)) != 1 for k in ("n", "s", "c", "T", "tau")):
        raise ConfigError("simulate runs a single cell; give one value each for n, s, c, T and tau")
    spec = ExperimentSpec.from_config(cfg)
    (n,), (s,), (c,), (T,), (tau,) = cfg.n, cfg.s, cfg.c, cfg.T, cfg.tau
    sim = SimConfig(n=n, s=s, c=c, B=cfg.B, seed=cfg.seed, round_limit=cfg.round_limit)
    adversary = make_adversary(cfg.adversary, n, s=s, T=T, tau=tau, extra_p=cfg.extra_p, seed=cfg.seed)
    trace = TraceRecorder() if cfg.trace else None
    metrics = run_protocol(cfg.protocol, sim, adversary, T=T, tau=tau, opts=spec.options, trace=trace)

    row = metrics.row()
    w = {"key": 20, "val": 14}
    print(f"\n{cfg.protocol} on {adversary.describe()}: n={n} s={s} c={c} seed={cfg.seed}")
    print(f"{'Metric':<{w['key']}} {'Value':>{w['val']}}")
    print("-" * (sum(w.values()) + 1))
    print(f"{'setting':<{w['key']}} {metrics.extra.get('setting') or '-':>{w['val']}}")
    for key, val in row.items():
        print(f"{key:<{w['key']}} {_fmt(val):>{w['val']}}")
    if "learning_floor" in metrics.extra:
        print(f"{'learning_floor':<{w['key']}} {_fmt(metrics.extra['learning_floor']):>{w['val']}}")
    if metrics.phase_rows:
        print(f"\n{'Phase':>6} {'ell/x':>8} {'Rounds':>12} {'MinMult':>8} {'Success':>8}")
        for p in metrics.phase_rows:
            ok = "-" if p.success is None else str(p.success)
            print(f"{p.phase:>6} {p.ell_or_x:>8} {p.rounds:>12} {p.min_multiplicity:>8} {ok:>8}")
    if trace is not None:
        trace.frame().to_csv(cfg.trace, index=False)
        print(f"\nWrote {len(trace.rows)} trace rows to {cfg.trace}")
    if cfg.out:
        pd.DataFrame([row]).to_csv(cfg.out, index=False)
    return EXIT_OK


def cmd_sweep(cfg: Config) -> int:
    df = run_experiment(ExperimentSpec.from_config(cfg))
    ok = df[df["error"] == ""]
    print(f"\n{'n':>6} {'s':>5} {'c':>4} {'T':>6} {'tau':>6} {'trials':>7} {'success':>8} "
          f"{'median rounds':>14} {'errors':>7}")
    print("-" * 70)
    for (n, s, c, T, tau), cell in df.groupby(["n", "s", "c", "T", "tau"], sort=False):
        good = cell[cell["error"] == ""]
        median = good["completion_round"].median() if len(good) else math.nan
        rate = good["success"].mean() if len(good) else math.nan
        print(f"{n:>6} {s:>5} {c:>4} {_fmt(T):>6} {_fmt(tau):>6} {len(cell):>7} {_fmt(rate):>8} "
              f"{_fmt(median):>14} {len(cell) - len(good):>7}")
    if cfg.out:
        print(f"\nWrote {len(df)} rows ({len(ok)} ok) to {cfg.out}")
    return EXIT_OK


def cmd_hitgame(cfg: Config, args: argparse.Namespace) -> int:
    if args.uniform is not None:
        alpha, beta = args.uniform
        frame = uniform_trials(alpha, beta, cfg.trials, cfg.seed)
        res = uniform_calibration(alpha, beta, cfg.trials, frame=frame)
        print(f"uniform player, ({alpha}, {beta})-game, {cfg.trials} trials: "
              f"mean {res['mean']:.3f} guesses, exact {res['exact']:.3f} "
              f"(relative error {res['relative_error']:.3%})")
        if cfg.out:
            frame.to_csv(cfg.out, index=False)
        return EXIT_OK
    if cfg.protocol not in ("alg1", "alg2"):
        raise ConfigError(f"hitgame simulates alg1 or alg2 (got {cfg.protocol!r})")
    spec = ExperimentSpec.from_config(cfg)
    (n,), (s,) = cfg.n[:1], cfg.s[:1]
    df = hitgame_trials(cfg.protocol, n, s, cfg.trials, cfg.seed, opts=spec.options,
                        replay=not args.no_replay, round_limit=cfg.round_limit)
    print(f"\n{'Trial':>6} {'Won':>4} {'Rounds':>12} {'Guesses':>8} {'Replay':>7}")
    print("-" * 41)
    for r in df.itertuples():
        print(f"{r.trial:>6} {r.won:>4} {r.rounds:>12} {r.guesses:>8} {_fmt(r.replay_match):>7}")
    print(f"\n(n-s, s) = ({n - s}, {s}): won {int(df['won'].sum())}/{len(df)}, "
          f"median guesses {_fmt(float(df['guesses'].median()))}")
    if cfg.out:
        df.to_csv(cfg.out, index=False)
    return EXIT_OK


def cmd_validate(cfg: Config, args: argparse.Namespace) -> int:
    report = validate(seed=cfg.seed, quick=args.quick)
    print(report.render())
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_fit(args: argparse.Namespace) -> int:
    try:
        df = pd.read_csv(args.csv)
    except (OSError, pd.errors.ParserError) as exc:
        raise ConfigError(f"cannot read {args.csv!r}: {exc}") from exc
    if "error" in df.columns:
        df["error"] = df["error"].fillna("")
    result = fit_scaling(df, args.model, args.response)
    print(f"\n{args.response} ~ {args.model}")
    print(result.render())
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        level = (args.log_level or cfg.log_level).upper()
        logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "validate":
            return cmd_validate(cfg.with_overrides(seed=args.seed), args)
        cfg = cfg.with_overrides(**_overrides(args))
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_hitgame(cfg, args)
    except (ConfigError, DomainError, FitError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())

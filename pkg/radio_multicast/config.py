"""
Configuration loading for the simulator and experiment harness.

Defaults <- optional YAML file <- environment variables (a .env file is read
first via python-dotenv) <- CLI flag overrides applied by the CLI.
"""
from __future__ import annotations
from dataclasses import dataclass, fields, replace
from typing import Any, Callable, Dict, Optional, Tuple
import logging
import math
import os

import yaml

try:
    from dotenv import load_dotenv, find_dotenv  # type: ignore
except Exception:  # pragma: no cover - optional dependency, but recommended
    load_dotenv = None  # type: ignore
    find_dotenv = None  # type: ignore

from .adversaries import ADVERSARY_NAMES
from .core import Extended
from .errors import ConfigError
from .experiments import PROTOCOLS, SETTING_CHOICES

log = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1
_INF_WORDS = {"inf", "infinity", "oo", "∞"}


def _as_bool(val: Any, default: bool = False, name: str = "") -> bool:
    if val is None:
        return default
    if isinstance(val, bool):
        return val
    return str(val).strip().lower() in {"1", "true", "yes", "y", "on"}


def _as_int(val: Any, name: str) -> int:
    if isinstance(val, bool):
        raise ConfigError(f"{name} must be an integer (got {val!r})")
    if isinstance(val, float) and val.is_integer():
        return int(val)
    try:
        return int(str(val).strip())
    except ValueError:
        raise ConfigError(f"{name} must be an integer (got {val!r})")


def _as_float(val: Any, name: str) -> float:
    try:
        return float(str(val).strip())
    except ValueError:
        raise ConfigError(f"{name} must be a number (got {val!r})")


def _as_extended(val: Any, name: str) -> Extended:
    """A non-negative integer or infinity ("inf", "infinity", "oo")."""
    if isinstance(val, float) and math.isinf(val):
        return math.inf
    if str(val).strip().lower() in _INF_WORDS:
        return math.inf
    out = _as_int(val, name)
    if out < 0:
        raise ConfigError(f"{name} must be >= 0 or inf (got {val!r})")
    return out


def _as_optional_int(val: Any, name: str) -> Optional[int]:
    if val is None or str(val).strip().lower() in {"", "none", "null"}:
        return None
    return _as_int(val, name)


def _as_optional_str(val: Any, name: str) -> Optional[str]:
    if val is None or str(val).strip() == "":
        return None
    return str(val)


def _as_str(val: Any, name: str) -> str:
    return str(val).strip()


def _grid(parse: Callable[[Any, str], Any]) -> Callable[[Any, str], Tuple]:
    """Lists come as YAML sequences, single scalars, or comma-separated strings."""
    def parse_grid(val: Any, name: str) -> Tuple:
        if isinstance(val, (list, tuple)):
            items = list(val)
        elif isinstance(val, str):
            items = [x for x in val.split(",") if x.strip()]
        else:
            items = [val]
        if not items:
            raise ConfigError(f"{name} must list at least one value")
        return tuple(parse(x, name) for x in items)
    return parse_grid


@dataclass(frozen=True)
class Config:
    # Protocol and environment
    protocol: str = "alg1"
    adversary: str = "random-connected"
    setting: str = "auto"

    # Grid (single-run commands use one cell)
    n: Tuple[int, ...] = (16,)
    s: Tuple[int, ...] = (4,)
    c: Tuple[int, ...] = (1,)
    T: Tuple[Extended, ...] = (math.inf,)
    tau: Tuple[Extended, ...] = (math.inf,)
    B: int = 1
    seed: int = 0
    round_limit: int = 1_000_000_000

    # Protocol constants
    epsilon: float = 0.5
    harmonic_multiplier: float = 4.0
    harmonic_period: Optional[int] = None
    kappa: float = 3.0
    kappa_psi: float = 8.0
    kappa_pair: float = 4.0
    kappa_rlnc: float = 4.0
    alpha: float = 24.0
    q: int = 257
    payload_len: Optional[int] = None
    extra_p: float = 0.0
    elide: bool = True

    # Harness
    trials: int = 1
    out: Optional[str] = None
    phases_out: Optional[str] = None
    trace: Optional[str] = None

    # Logging
    log_level: str = "INFO"

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; valid names: {', '.join(PROTOCOLS)}")
        if self.adversary not in ADVERSARY_NAMES:
            raise ConfigError(
                f"unknown adversary {self.adversary!r}; valid names: {', '.join(ADVERSARY_NAMES)}")
        if self.setting not in SETTING_CHOICES:
            raise ConfigError(f"unknown setting {self.setting!r}; valid: {', '.join(SETTING_CHOICES)}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1 (got {self.trials})")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1) (got {self.epsilon})")
        if not 0.0 <= self.extra_p <= 1.0:
            raise ConfigError(f"extra_p must lie in [0, 1] (got {self.extra_p})")
        if any(t < 1 for t in self.T):
            raise ConfigError(f"T values must be >= 1 (got {self.T})")

    def with_overrides(self, **overrides: Any) -> "Config":
        """Apply CLI overrides; None means "not given"."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


# field -> (YAML section, YAML key, environment variable, parser)
_SOURCES: Dict[str, Tuple[str, str, str, Callable[[Any, str], Any]]] = {
    "protocol": ("protocol", "name", "RADIO_PROTOCOL", _as_str),
    "setting": ("protocol", "setting", "RADIO_SETTING", _as_str),
    "epsilon": ("protocol", "epsilon", "RADIO_EPSILON", _as_float),
    "harmonic_multiplier": ("protocol", "harmonic_multiplier", "RADIO_HARMONIC_MULTIPLIER", _as_float),
    "harmonic_period": ("protocol", "harmonic_period", "RADIO_HARMONIC_PERIOD", _as_optional_int),
    "kappa": ("protocol", "kappa", "RADIO_KAPPA", _as_float),
    "kappa_psi": ("protocol", "kappa_psi", "RADIO_KAPPA_PSI", _as_float),
    "kappa_pair": ("protocol", "kappa_pair", "RADIO_KAPPA_PAIR", _as_float),
    "kappa_rlnc": ("protocol", "kappa_rlnc", "RADIO_KAPPA_RLNC", _as_float),
    "alpha": ("protocol", "alpha", "RADIO_ALPHA", _as_float),
    "q": ("protocol", "q", "RADIO_Q", _as_int),
    "payload_len": ("protocol", "payload_len", "RADIO_PAYLOAD_LEN", _as_optional_int),
    "elide": ("protocol", "elide", "RADIO_ELIDE", lambda v, name: _as_bool(v, True)),
    "adversary": ("adversary", "name", "RADIO_ADVERSARY", _as_str),
    "T": ("adversary", "T", "RADIO_T", _grid(_as_extended)),
    "tau": ("adversary", "tau", "RADIO_TAU", _grid(_as_extended)),
    "extra_p": ("adversary", "extra_p", "RADIO_EXTRA_P", _as_float),
    "n": ("sim", "n", "RADIO_N", _grid(_as_int)),
    "s": ("sim", "s", "RADIO_S", _grid(_as_int)),
    "c": ("sim", "c", "RADIO_C", _grid(_as_int)),
    "B": ("sim", "B", "RADIO_B", _as_int),
    "seed": ("sim", "seed", "RADIO_SEED", _as_int),
    "round_limit": ("sim", "round_limit", "RADIO_ROUND_LIMIT", _as_int),
    "trials": ("harness", "trials", "RADIO_TRIALS", _as_int),
    "out": ("harness", "out", "RADIO_OUT", _as_optional_str),
    "phases_out": ("harness", "phases_out", "RADIO_PHASES_OUT", _as_optional_str),
    "trace": ("harness", "trace", "RADIO_TRACE", _as_optional_str),
    "log_level": ("logging", "level", "LOG_LEVEL", _as_str),
}


def read_yaml(path: str) -> Dict[str, Any]:
    """Flatten a sectioned YAML config file into Config field values."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path!r} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path!r} must hold a mapping")
    version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version!r} (expected {CONFIG_SCHEMA_VERSION})")
    known_sections = {section for section, *_ in _SOURCES.values()}
    for key in doc:
        if key != "schema_version" and key not in known_sections:
            raise ConfigError(f"unknown config section {key!r}; valid: {', '.join(sorted(known_sections))}")
    values: Dict[str, Any] = {}
    for name, (section, key, _, parse) in _SOURCES.items():
        block = doc.get(section) or {}
        if not isinstance(block, dict):
            raise ConfigError(f"config section {section!r} must be a mapping")
        if key in block:
            values[name] = parse(block[key], f"{section}.{key}")
    return values


def load_config(path: Optional[str] = None) -> Config:
    """
    Load configuration from an optional YAML file and environment variables.
    If python-dotenv is present, load .env (or ENV_FILE) first. RADIO_CONFIG
    names the YAML file when ``path`` is not given.
    """
    if load_dotenv and find_dotenv:
        env_file = os.environ.get("ENV_FILE") or find_dotenv(usecwd=True)
        if env_file:
            load_dotenv(env_file, override=False)

    values: Dict[str, Any] = {}
    path = path or os.environ.get("RADIO_CONFIG")
    if path:
        values.update(read_yaml(path))
        log.debug("loaded %d settings from %s", len(values), path)

    for name, (_, _, env, parse) in _SOURCES.items():
        raw = os.environ.get(env)
        if raw is not None and raw.strip() != "":
            values[name] = parse(raw, env)

    known = {f.name for f in fields(Config)}
    return Config(**{k: v for k, v in values.items() if k in known})


def parse_int_grid(val: str, name: str = "value") -> Tuple[int, ...]:
    return _grid(_as_int)(val, name)


def parse_extended_grid(val: str, name: str = "value") -> Tuple[Extended, ...]:
    return _grid(_as_extended)(val, name)

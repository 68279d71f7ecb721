"""
Run metrics and the fixed CSV schema of the experiment harness.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional
import math

import numpy as np

from .core import Network

CSV_SCHEMA_VERSION = 1

CELL_COLUMNS = ["protocol", "adversary", "setting", "n", "s", "c", "T", "tau", "trial", "seed"]

METRIC_COLUMNS = [
    "rounds_total",
    "simulated_rounds",
    "elided_rounds",
    "completion_round",
    "transmissions",
    "isolation_rounds",
    "collision_rounds",
    "busy_rounds",
    "success",
    "phases",
    "successful_phases",
    "truncated",
    "livelock",
    "consistent",
    "learning_events",
    "max_learning",
]

CSV_COLUMNS = ["schema_version"] + CELL_COLUMNS + METRIC_COLUMNS + ["error"]

PHASE_COLUMNS = ["trial", "seed", "n", "s", "c", "phase", "ell_or_x", "rounds", "min_multiplicity", "success"]

RANK_COLUMNS = ["round", "node", "rank", "decoded"]


@dataclass
class PhaseRow:
    phase: int
    ell_or_x: int
    rounds: int
    min_multiplicity: int
    success: Optional[bool] = None


@dataclass
class Metrics:
    """Outcome of one run. ``delivery[v, i]`` is the round node v first held message i (-1: never)."""
    protocol: str
    rounds_total: int = 0
    simulated_rounds: int = 0
    elided_rounds: int = 0
    transmissions: int = 0
    isolation_rounds: int = 0
    collision_rounds: int = 0
    busy_rounds: int = 0
    success: bool = False
    phases: int = 0
    successful_phases: int = 0
    truncated: bool = False
    livelock: bool = False
    consistent: bool = True
    learning_events: int = 0
    max_learning: int = 0
    delivery: Optional[np.ndarray] = None
    phase_rows: List[PhaseRow] = field(default_factory=list)
    rank_rows: List[tuple] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)

    def absorb_network(self, net: Network) -> "Metrics":
        st = net.stats
        self.rounds_total = net.round
        self.simulated_rounds = st.simulated_rounds
        self.elided_rounds = st.elided_rounds
        self.transmissions = st.transmissions
        self.isolation_rounds = st.isolation_rounds
        self.collision_rounds = st.collision_rounds
        return self

    @property
    def completion_round(self) -> Optional[int]:
        """Round by which every node held every message, if that happened."""
        if self.delivery is None or self.delivery.size == 0 or (self.delivery < 0).any():
            return None
        return int(self.delivery.max())

    def row(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for name in METRIC_COLUMNS:
            out[name] = getattr(self, name)
        for name in ("success", "truncated", "livelock", "consistent"):
            out[name] = int(out[name])
        if out["completion_round"] is None:
            out["completion_round"] = math.nan
        return out

    def phase_table(self) -> List[Dict[str, Any]]:
        return [
            {"phase": p.phase, "ell_or_x": p.ell_or_x, "rounds": p.rounds,
             "min_multiplicity": p.min_multiplicity,
             "success": "" if p.success is None else int(p.success)}
            for p in self.phase_rows
        ]

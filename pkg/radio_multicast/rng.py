"""
Seeded, labelled random streams.

Every stream is derived from a 64-bit seed and a text label through numpy's
SeedSequence, so (seed, label) always yields the same draws and distinct labels
yield independent streams. The label is hashed into the spawn key.
"""
from __future__ import annotations
from typing import Dict, List, Optional, Tuple
import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_key(label: str) -> Tuple[int, ...]:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=16).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


def seeded_rng(seed: int, stream: str) -> np.random.Generator:
    """Return the reproducible generator for ``(seed, stream)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=_label_key(stream))
    return np.random.Generator(np.random.PCG64DXSM(ss))


def derive_seed(seed: int, *parts: object) -> int:
    """Derive a child 64-bit seed from ``seed`` and any labels (cell, trial, ...)."""
    label = "/".join(str(p) for p in parts)
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=_label_key(label))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class RandomLedger:
    """
    The protocol's random stream, with every draw logged under the round it
    belongs to. Adversaries read the ledger through the audited history view.
    """

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._pending: List[Tuple[str, object]] = []
        self._by_round: Dict[int, List[Tuple[str, object]]] = {}

    def _log(self, kind: str, value: object) -> None:
        self._pending.append((kind, value))

    def random(self, size: Optional[int] = None):
        out = self._rng.random(size)
        self._log("random", out)
        return out

    def integers(self, low: int, high: Optional[int] = None, size: Optional[int] = None):
        out = self._rng.integers(low, high, size=size)
        self._log("integers", out)
        return out

    def choice(self, a, size: Optional[int] = None, replace: bool = True):
        out = self._rng.choice(a, size=size, replace=replace)
        self._log("choice", out)
        return out

    def permutation(self, x):
        out = self._rng.permutation(x)
        self._log("permutation", out)
        return out

    def seal(self, round_index: int) -> List[Tuple[str, object]]:
        """Attach everything drawn since the last seal to ``round_index``."""
        draws, self._pending = self._pending, []
        self._by_round.setdefault(round_index, []).extend(draws)
        return self._by_round[round_index]

    def pending(self) -> List[Tuple[str, object]]:
        return list(self._pending)

    def draws(self, round_index: int) -> List[Tuple[str, object]]:
        return list(self._by_round.get(round_index, []))

    def forget_before(self, round_index: int) -> None:
        for r in [r for r in self._by_round if r < round_index]:
            del self._by_round[r]

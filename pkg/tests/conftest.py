"""Shared pytest fixtures and configuration."""
from __future__ import annotations
import math

import pytest

from radio_multicast.adversaries import RandomConnectedAdversary, StableSubgraph, StaticAdversary
from radio_multicast.core import Network, SimConfig
from radio_multicast.protocols import ProtocolParams


# clean_env is opt-in: configuration and CLI tests request it explicitly.


@pytest.fixture
def ring8():
    """Connected ring on 8 nodes."""
    return StableSubgraph.ring(8)


@pytest.fixture
def clique_net():
    """Factory for a network on the static complete graph."""
    def make(n: int = 6, s: int = 1, c: int = 1, seed: int = 0, **kwargs) -> Network:
        cfg = SimConfig(n=n, s=s, c=c, seed=seed, round_limit=kwargs.pop("round_limit", 1_000_000))
        return Network(cfg, StaticAdversary(StableSubgraph.clique(n)), **kwargs)
    return make


@pytest.fixture
def benign_net():
    """Factory for a network under the random-connected adversary (T = inf)."""
    def make(n: int = 8, s: int = 1, c: int = 1, seed: int = 0, T=math.inf, **kwargs) -> Network:
        cfg = SimConfig(n=n, s=s, c=c, seed=seed, round_limit=kwargs.pop("round_limit", 10_000_000))
        return Network(cfg, RandomConnectedAdversary(T=T), **kwargs)
    return make


@pytest.fixture
def fast_params():
    """Protocol constants small enough for quick runs."""
    return ProtocolParams(harmonic_multiplier=1.0, kappa=2.0, kappa_psi=1.0, kappa_pair=2.0)


@pytest.fixture
def clean_env(monkeypatch):
    """Remove RADIO_* variables and disable .env loading."""
    import os
    monkeypatch.setattr("radio_multicast.config.load_dotenv", None)
    for var in list(os.environ):
        if var.startswith("RADIO_") or var in ("LOG_LEVEL", "ENV_FILE"):
            monkeypatch.delenv(var, raising=False)
    return monkeypatch

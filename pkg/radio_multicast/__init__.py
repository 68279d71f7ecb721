"""
radio_multicast
---------------
Round-synchronous simulator of adversarial dynamic radio networks: store-and-forward
and network-coding multi-message broadcast, the hitting-game lower-bound
reduction, and an experiment harness that sweeps parameter grids to CSV.
"""

__version__ = "0.1.0"

from .adversaries import AdversaryPolicy, StableSubgraph, make_adversary
from .core import Network, Packet, RoundGraph, SimConfig, check_interval_connectivity, resolve_round
from .errors import SimError
from .experiments import ExperimentSpec, RunOptions, fit_scaling, run_experiment, run_protocol
from .metrics import Metrics
from .multicast import algorithm1_multicast, algorithm2_multicast
from .protocols import ProtocolParams, Setting, concurrency_resistant, limited_broadcast
from .rlnc import rlnc_broadcast
from .validation import validate

__all__ = [
    "AdversaryPolicy", "ExperimentSpec", "Metrics", "Network", "Packet", "ProtocolParams",
    "RoundGraph", "RunOptions", "Setting", "SimConfig", "SimError", "StableSubgraph",
    "algorithm1_multicast", "algorithm2_multicast", "check_interval_connectivity",
    "concurrency_resistant", "fit_scaling", "limited_broadcast", "make_adversary",
    "resolve_round", "rlnc_broadcast", "run_experiment", "run_protocol", "validate",
]

"""
Exception hierarchy shared by the simulator modules.
"""
from __future__ import annotations


class SimError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigError(SimError, ValueError):
    """Invalid configuration: bad parameters, mismatched sizes, unknown names."""


class DomainError(SimError, ValueError):
    """An argument outside the domain of an operation (e.g. inv(0), T < 1)."""


class DispatchError(ConfigError):
    """A protocol was asked to run outside the parameter band it supports."""


class AuditViolation(SimError):
    """An adversary read history it is not entitled to, or broke its T promise."""


class RoundLimitExceeded(SimError):
    """A run tried to go past SimConfig.round_limit."""

    def __init__(self, round_limit: int):
        super().__init__(f"round limit {round_limit} exceeded")
        self.round_limit = round_limit


class UnreachableCouponError(DomainError):
    """A coupon has no placement, so the collection process would never end."""


class GameProtocolError(SimError):
    """The hitting game was used out of order (e.g. a guess after WON)."""


class SimulationHalted(SimError):
    """Raised by the network when its halt predicate fires; carries the round."""

    def __init__(self, round_index: int):
        super().__init__(f"simulation halted after round {round_index}")
        self.round_index = round_index


class InvariantViolation(SimError):
    """A checked run invariant failed (capacity, span soundness, ...)."""


class FitError(SimError, ValueError):
    """A scaling fit could not be computed (e.g. a rank-deficient design)."""

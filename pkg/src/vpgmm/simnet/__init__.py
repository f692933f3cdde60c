"""Deterministic in-process multi-party runtime."""

from vpgmm.simnet.bus import Bus, Outgoing, RoundProgram, RoundResult, all_agree
from vpgmm.simnet.party import PartyRuntime, make_parties

__all__ = [
    "Bus",
    "Outgoing",
    "PartyRuntime",
    "RoundProgram",
    "RoundResult",
    "all_agree",
    "make_parties",
]

"""Consensus protocol lab: Paxos variants and leader leases as pure state
machines, a deterministic network simulator, trace checkers and a bounded
exhaustive oracle."""

from .checker import (
    check_agreement,
    check_induction_list,
    check_lease_uniqueness,
    detect_livelock,
)
from .core import AgentId, Mutation, Proposal, ProposalNumber, QuorumConfig, Value
from .oracle import oracle_explore
from .scenario import ConfigError, ScenarioConfig, bundled, script_duel
from .simnet import run, run_with_summary
from .trace import Trace

__version__ = "0.1.0"

__all__ = [
    "AgentId",
    "ConfigError",
    "Mutation",
    "Proposal",
    "ProposalNumber",
    "QuorumConfig",
    "ScenarioConfig",
    "Trace",
    "Value",
    "bundled",
    "check_agreement",
    "check_induction_list",
    "check_lease_uniqueness",
    "detect_livelock",
    "oracle_explore",
    "run",
    "run_with_summary",
    "script_duel",
]

"""Two-phase proposer with value inheritance and restart policies."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import FrozenSet, Optional, Tuple

from .core import (
    AgentId,
    DecisionNotice,
    FullAck,
    FullProposal,
    Kind,
    Mutation,
    PreAck,
    PreProposal,
    Proposal,
    ProposalNumber,
    QuorumConfig,
    Value,
    ack_threshold,
)


class Phase(str, enum.Enum):
    IDLE = "idle"
    PRE_PROPOSING = "pre_proposing"
    PROPOSING = "proposing"
    DECIDED = "decided"


class ProtocolError(ValueError):
    """A caller broke a state machine precondition."""


@dataclass(frozen=True)
class RestartPolicy:
    mode: str = "eager"  # eager | timed | never
    wait: int = 0

    def __post_init__(self):
        if self.mode not in ("eager", "timed", "never"):
            raise ValueError(f"unknown restart mode {self.mode!r}")
        if self.mode == "timed" and self.wait <= 0:
            raise ValueError("timed restart needs wait > 0")

    @classmethod
    def eager(cls):
        return cls("eager")

    @classmethod
    def timed(cls, wait: int):
        return cls("timed", wait)

    @classmethod
    def never(cls):
        return cls("never")


@dataclass(frozen=True)
class Restart:
    round: int


@dataclass(frozen=True)
class ProposerState:
    id: AgentId
    own_value: Value
    restart_policy: RestartPolicy = field(default_factory=RestartPolicy.eager)
    phase: Phase = Phase.IDLE
    current_number: Optional[ProposalNumber] = None
    active_value: Optional[Value] = None
    # acceptor -> attached proposal; a frozenset of pairs keeps the state hashable
    pre_acks: FrozenSet[Tuple[AgentId, Optional[Proposal]]] = frozenset()
    full_acks: FrozenSet[AgentId] = frozenset()
    stall_deadline: Optional[int] = None
    last_round: int = -1
    max_round_seen: int = -1
    distinguished: bool = False

    def __post_init__(self):
        if self.id.kind is not Kind.PROPOSER:
            raise ValueError(f"{self.id} is not a proposer")

    @property
    def promisers(self) -> FrozenSet[AgentId]:
        return frozenset(a for a, _ in self.pre_acks)

    def next_round(self) -> int:
        return max(self.last_round, self.max_round_seen) + 1


def start_round(state: ProposerState, round: int) -> Tuple[ProposerState, PreProposal]:
    if state.phase is not Phase.IDLE:
        raise ProtocolError(f"{state.id} cannot start a round while {state.phase.value}")
    if round <= state.last_round:
        raise ProtocolError(f"{state.id} already used round {state.last_round}; got {round}")
    number = ProposalNumber(round, state.id)
    new = replace(
        state,
        phase=Phase.PRE_PROPOSING,
        current_number=number,
        active_value=None,
        pre_acks=frozenset(),
        full_acks=frozenset(),
        stall_deadline=None,
        last_round=round,
        max_round_seen=max(state.max_round_seen, round),
    )
    return new, PreProposal(number)


def _observe(state: ProposerState, *numbers: Optional[ProposalNumber]) -> ProposerState:
    seen = max((n.round for n in numbers if n is not None), default=-1)
    if seen > state.max_round_seen:
        return replace(state, max_round_seen=seen)
    return state


def on_pre_ack(
    state: ProposerState,
    sender: AgentId,
    ack: PreAck,
    cfg: QuorumConfig,
    mutation: Optional[Mutation] = None,
) -> Tuple[ProposerState, Optional[FullProposal]]:
    """Record a phase-1 ack; on the first quorum, fix the value and go to phase 2."""
    state = _observe(state, ack.number, ack.attached.number if ack.attached else None)
    if state.phase is not Phase.PRE_PROPOSING:
        return state, None
    if ack.number != state.current_number and mutation is not Mutation.STALE_ACK_COUNT:
        return state, None
    if sender in state.promisers:
        return state, None
    pre_acks = state.pre_acks | {(sender, ack.attached)}
    state = replace(state, pre_acks=pre_acks, stall_deadline=None)
    if len(pre_acks) < ack_threshold(cfg, mutation):
        return state, None

    attached = [p for _, p in pre_acks if p is not None]
    if attached and mutation is not Mutation.INHERITANCE_DROP:
        value = max(attached, key=lambda p: p.number).value
    else:
        value = state.own_value
    state = replace(state, phase=Phase.PROPOSING, active_value=value)
    return state, FullProposal(Proposal(state.current_number, value))


def on_full_ack(
    state: ProposerState,
    sender: AgentId,
    ack: FullAck,
    cfg: QuorumConfig,
    mutation: Optional[Mutation] = None,
) -> Tuple[ProposerState, Optional[DecisionNotice]]:
    state = _observe(state, ack.number)
    if state.phase is not Phase.PROPOSING:
        return state, None
    if ack.number != state.current_number and mutation is not Mutation.STALE_ACK_COUNT:
        return state, None
    if sender in state.full_acks:
        return state, None
    full_acks = state.full_acks | {sender}
    state = replace(state, full_acks=full_acks, stall_deadline=None)
    if len(full_acks) < ack_threshold(cfg, mutation):
        return state, None
    state = replace(state, phase=Phase.DECIDED)
    return state, DecisionNotice(state.active_value, number=state.current_number)


def on_stall(state: ProposerState, now: int) -> Tuple[ProposerState, Optional[Restart]]:
    """React to a lack of progress according to the restart policy.

    A returned :class:`Restart` leaves the proposer idle with its value
    abandoned; the caller follows up with :func:`start_round`.
    """
    if state.phase not in (Phase.PRE_PROPOSING, Phase.PROPOSING):
        return state, None
    policy = state.restart_policy
    if policy.mode == "never":
        return state, None
    if policy.mode == "timed":
        if state.stall_deadline is None:
            state = replace(state, stall_deadline=now + policy.wait)
        if now < state.stall_deadline:
            return state, None
    return abandon(state)


def abandon(state: ProposerState) -> Tuple[ProposerState, Restart]:
    """Drop the current number and value; the proposer goes back to idle."""
    abandoned = replace(
        state,
        phase=Phase.IDLE,
        active_value=None,
        pre_acks=frozenset(),
        full_acks=frozenset(),
        stall_deadline=None,
    )
    return abandoned, Restart(abandoned.next_round())


def distinguished_mode(state: ProposerState) -> ProposerState:
    """Mark the proposer as the sole issuer of proposals.

    The machine itself is unchanged; scenario validation is what guarantees
    there is no competitor.
    """
    return replace(state, distinguished=True)

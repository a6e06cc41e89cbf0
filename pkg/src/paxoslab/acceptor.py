"""Acceptor state machine.

Transitions are pure: each handler takes the current state and an input and
returns the next state plus the reply to send, or ``None`` when the input is
silently ignored. An acceptor acknowledges a number only if it has never
acknowledged a greater one, in either phase.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple

from .core import (
    AgentId,
    FullAck,
    Mutation,
    PreAck,
    Proposal,
    ProposalNumber,
)


@dataclass(frozen=True)
class AcceptorState:
    id: AgentId
    max_acked: Optional[ProposalNumber] = None
    max_accepted: Optional[Proposal] = None

    def __post_init__(self):
        if self.max_accepted is not None:
            if self.max_acked is None or self.max_accepted.number > self.max_acked:
                raise ValueError("max_accepted is newer than max_acked")


def _may_ack(state: AcceptorState, number: ProposalNumber, mutation) -> bool:
    if mutation is Mutation.ORDERING_DROP:
        return True
    return state.max_acked is None or state.max_acked <= number


def _bump(current: Optional[ProposalNumber], number: ProposalNumber) -> ProposalNumber:
    return number if current is None or current < number else current


def on_pre_proposal(
    state: AcceptorState,
    number: ProposalNumber,
    mutation: Optional[Mutation] = None,
) -> Tuple[AcceptorState, Optional[PreAck]]:
    if not _may_ack(state, number, mutation):
        return state, None
    attached = state.max_accepted
    if mutation is Mutation.ATTACHMENT_DROP:
        attached = None
    elif attached is not None and not attached.number < number:
        # only reachable with ORDERING_DROP: nothing older to attach
        attached = None
    return replace(state, max_acked=_bump(state.max_acked, number)), PreAck(number, attached)


def on_full_proposal(
    state: AcceptorState,
    proposal: Proposal,
    mutation: Optional[Mutation] = None,
) -> Tuple[AcceptorState, Optional[FullAck]]:
    if not _may_ack(state, proposal.number, mutation):
        return state, None
    accepted = state.max_accepted
    if accepted is None or accepted.number <= proposal.number:
        accepted = proposal
    new = replace(
        state,
        max_acked=_bump(state.max_acked, proposal.number),
        max_accepted=accepted,
    )
    return new, FullAck(proposal.number)

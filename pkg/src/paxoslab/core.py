"""Shared vocabulary: agent ids, proposal numbers, values, messages, quorums."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional, Union


class Kind(str, enum.Enum):
    PROPOSER = "proposer"
    ACCEPTOR = "acceptor"
    LEARNER = "learner"


_PREFIX = {Kind.PROPOSER: "p", Kind.ACCEPTOR: "a", Kind.LEARNER: "l"}
_BY_PREFIX = {v: k for k, v in _PREFIX.items()}


@dataclass(frozen=True, order=True)
class AgentId:
    kind: Kind
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"negative agent index {self.index}")

    def __str__(self):
        return f"{_PREFIX[self.kind]}{self.index}"

    @classmethod
    def parse(cls, text: str) -> "AgentId":
        """Inverse of ``str``: ``"p0"`` -> proposer 0, ``"a2"`` -> acceptor 2."""
        try:
            return cls(_BY_PREFIX[text[0]], int(text[1:]))
        except (KeyError, IndexError, ValueError):
            raise ValueError(f"bad agent id {text!r}") from None


def proposer(i: int) -> AgentId:
    return AgentId(Kind.PROPOSER, i)


def acceptor(i: int) -> AgentId:
    return AgentId(Kind.ACCEPTOR, i)


def learner(i: int) -> AgentId:
    return AgentId(Kind.LEARNER, i)


@dataclass(frozen=True, order=True)
class ProposalNumber:
    """Globally unique proposal number.

    Ordered by ``round`` first and the proposer's index second. Embedding the
    proposer makes two proposers unable to produce the same number.
    """

    round: int
    proposer: AgentId

    def __post_init__(self):
        if self.round < 0:
            raise ValueError("round must be non-negative")
        if self.proposer.kind is not Kind.PROPOSER:
            raise ValueError(f"{self.proposer} is not a proposer")

    def __str__(self):
        return f"({self.round},{self.proposer})"


class Ordering(enum.Enum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def compare_numbers(a: ProposalNumber, b: ProposalNumber) -> Ordering:
    if a == b:
        return Ordering.EQUAL
    return Ordering.LESS if a < b else Ordering.GREATER


@dataclass(frozen=True)
class Value:
    """Opaque, non-empty payload. Only ever compared for byte equality."""

    payload: bytes

    def __post_init__(self):
        if not isinstance(self.payload, bytes):
            raise TypeError("value payload must be bytes")
        if not self.payload:
            raise ValueError("value payload must be non-empty")

    @classmethod
    def of(cls, text: str) -> "Value":
        return cls(text.encode())

    def __str__(self):
        try:
            return self.payload.decode("ascii")
        except UnicodeDecodeError:
            return self.payload.hex()


@dataclass(frozen=True)
class Proposal:
    number: ProposalNumber
    value: Value

    def __str__(self):
        return f"<{self.number},{self.value}>"


# -- messages ---------------------------------------------------------------


@dataclass(frozen=True)
class PreProposal:
    number: ProposalNumber


@dataclass(frozen=True)
class PreAck:
    number: ProposalNumber
    attached: Optional[Proposal] = None

    def __post_init__(self):
        if self.attached is not None and not self.attached.number < self.number:
            raise ValueError("attached proposal must be older than the pre-proposal")


@dataclass(frozen=True)
class FullProposal:
    proposal: Proposal


@dataclass(frozen=True)
class FullAck:
    number: ProposalNumber


@dataclass(frozen=True)
class NaivePropose:
    slot: int
    value: Value


@dataclass(frozen=True)
class NaiveAck:
    slot: int


@dataclass(frozen=True)
class Heartbeat:
    leader: AgentId
    epoch: int


@dataclass(frozen=True)
class LeaderClaim:
    candidate: AgentId
    epoch: int


@dataclass(frozen=True)
class LeaseGrant:
    candidate: AgentId
    epoch: int
    expires_at: Optional[int]  # None never expires


@dataclass(frozen=True)
class DecisionNotice:
    value: Value
    number: Optional[ProposalNumber] = None
    slot: Optional[int] = None


Message = Union[
    PreProposal,
    PreAck,
    FullProposal,
    FullAck,
    NaivePropose,
    NaiveAck,
    Heartbeat,
    LeaderClaim,
    LeaseGrant,
    DecisionNotice,
]


# -- quorums ----------------------------------------------------------------


@dataclass(frozen=True)
class QuorumConfig:
    acceptor_count: int
    quorum_size: int

    def __post_init__(self):
        if self.acceptor_count < 1:
            raise ValueError("acceptor_count must be positive")
        if self.quorum_size != self.acceptor_count // 2 + 1:
            raise ValueError(
                f"quorum_size {self.quorum_size} is not a strict majority of "
                f"{self.acceptor_count}"
            )

    @classmethod
    def majority(cls, acceptor_count: int) -> "QuorumConfig":
        return cls(acceptor_count, acceptor_count // 2 + 1)


def is_quorum(acks: Iterable[AgentId], cfg: QuorumConfig, threshold: Optional[int] = None) -> bool:
    """True iff ``acks`` holds at least a quorum of distinct acceptors.

    ``threshold`` overrides the quorum size; only the half-quorum mutant uses it.
    """
    acks = set(acks)
    for a in acks:
        if a.kind is not Kind.ACCEPTOR or a.index >= cfg.acceptor_count:
            raise ValueError(f"{a} is not an acceptor of this configuration")
    need = cfg.quorum_size if threshold is None else threshold
    return len(acks) >= need


class Mutation(str, enum.Enum):
    """Deliberately broken protocol variants used by the mutation suite."""

    ATTACHMENT_DROP = "attachment-drop"  # acceptor never attaches its accepted proposal
    INHERITANCE_DROP = "inheritance-drop"  # proposer ignores attachments
    ORDERING_DROP = "ordering-drop"  # acceptor acks below its promise
    STALE_ACK_COUNT = "stale-ack-count"  # proposer counts acks for old numbers
    HALF_QUORUM = "half-quorum"  # proposer needs only floor(n/2) acks


def ack_threshold(cfg: QuorumConfig, mutation: Optional[Mutation] = None) -> int:
    if mutation is Mutation.HALF_QUORUM:
        return max(1, cfg.acceptor_count // 2)
    return cfg.quorum_size

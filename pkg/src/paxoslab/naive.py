"""Single-proposer consensus: broadcast, then resend until a quorum acks.

Each slot is an independent instance; a proposer driving slots 0, 1, 2, ...
produces a sequence of agreed values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import FrozenSet, List, Optional, Tuple

from .core import AgentId, DecisionNotice, NaiveAck, NaivePropose, QuorumConfig, Value
from .proposer import ProtocolError


@dataclass(frozen=True)
class Slot:
    value: Value
    acks: FrozenSet[AgentId] = frozenset()
    decided: bool = False
    last_sent: int = 0
    resends: int = 0


@dataclass(frozen=True)
class NaiveProposerState:
    id: AgentId
    resend_interval: int = 5
    slots: Tuple[Tuple[int, Slot], ...] = ()

    def __post_init__(self):
        if self.resend_interval <= 0:
            raise ValueError("resend_interval must be positive")

    def slot(self, n: int) -> Optional[Slot]:
        for k, s in self.slots:
            if k == n:
                return s
        return None

    def _with(self, n: int, s: Slot) -> "NaiveProposerState":
        others = tuple((k, v) for k, v in self.slots if k != n)
        return replace(self, slots=tuple(sorted(others + ((n, s),), key=lambda kv: kv[0])))

    @property
    def decided_slots(self) -> FrozenSet[int]:
        return frozenset(k for k, s in self.slots if s.decided)


@dataclass(frozen=True)
class NaiveAcceptorState:
    id: AgentId
    acked_slots: FrozenSet[int] = frozenset()


def naive_propose(
    state: NaiveProposerState, slot: int, value: Value, now: int = 0
) -> Tuple[NaiveProposerState, NaivePropose]:
    if slot < 0:
        raise ProtocolError("slot must be non-negative")
    existing = state.slot(slot)
    if existing is not None:
        if existing.value != value:
            raise ProtocolError(f"slot {slot} already holds {existing.value}")
        return state, NaivePropose(slot, value)
    return state._with(slot, Slot(value, last_sent=now)), NaivePropose(slot, value)


def naive_on_ack(
    state: NaiveProposerState, sender: AgentId, slot: int, cfg: QuorumConfig
) -> Tuple[NaiveProposerState, Optional[DecisionNotice]]:
    s = state.slot(slot)
    if s is None:
        raise ProtocolError(f"ack for unknown slot {slot}")
    if s.decided or sender in s.acks:
        return state, None
    s = replace(s, acks=s.acks | {sender})
    if len(s.acks) < cfg.quorum_size:
        return state._with(slot, s), None
    s = replace(s, decided=True)
    return state._with(slot, s), DecisionNotice(s.value, slot=slot)


def naive_tick(state: NaiveProposerState, now: int) -> Tuple[NaiveProposerState, List[NaivePropose]]:
    resends = []
    for k, s in state.slots:
        if not s.decided and now - s.last_sent >= state.resend_interval:
            state = state._with(k, replace(s, last_sent=now, resends=s.resends + 1))
            resends.append(NaivePropose(k, s.value))
    return state, resends


def next_resend_at(state: NaiveProposerState) -> Optional[int]:
    pending = [s.last_sent + state.resend_interval for _, s in state.slots if not s.decided]
    return min(pending, default=None)


def naive_on_propose(
    state: NaiveAcceptorState, msg: NaivePropose
) -> Tuple[NaiveAcceptorState, NaiveAck]:
    return replace(state, acked_slots=state.acked_slots | {msg.slot}), NaiveAck(msg.slot)


def attempt_success(drop_probability: float) -> float:
    """Chance that one broadcast earns a given acceptor's ack (proposal and ack both arrive)."""
    return (1.0 - drop_probability) ** 2


def expected_resends(acceptor_count: int, drop_probability: float, tol: float = 1e-12) -> float:
    """Mean resends before a slot decides, when every resend goes to all acceptors.

    Acks accumulate across attempts, so each acceptor's first ack arrives after
    a geometric number of attempts with success ``q``. The slot decides on the
    attempt where the quorum-th acceptor first succeeds, i.e. the quorum-th
    order statistic A of n iid geometrics::

        P(A <= k) = sum_{j >= m} C(n, j) F^j (1 - F)^(n - j),  F = 1 - (1 - q)^k

    and resends = A - 1. Assumes the resend interval exceeds the round trip,
    so acks from one attempt land before the next goes out.
    """
    if not 0.0 <= drop_probability < 1.0:
        raise ValueError("drop_probability must be in [0, 1)")
    n, m = acceptor_count, acceptor_count // 2 + 1
    miss = 1.0 - attempt_success(drop_probability)
    expected, k = 0.0, 0
    while True:
        f = 1.0 - miss ** k
        tail = 1.0 - sum(math.comb(n, j) * f ** j * (1 - f) ** (n - j) for j in range(m, n + 1))
        expected += tail  # E[A] = sum_k P(A > k)
        k += 1
        if tail < tol:
            return expected - 1.0

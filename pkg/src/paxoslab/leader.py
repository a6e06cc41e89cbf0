"""Heartbeat and lease based leader election.

Every participant is both a grantor and a potential candidate. A follower
that hears nothing from a leader for ``follower_timeout`` becomes a candidate,
waits a random backoff, then claims the next epoch. Grantors hand out
time-limited leases and never hold two unexpired grants for different
candidates, so at most one agent can hold a quorum of live leases at a time.
A leader renews its lease with every heartbeat and steps down as soon as it
can no longer show a quorum of unexpired grants.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace
from typing import FrozenSet, List, Optional, Tuple

from .core import AgentId, Heartbeat, LeaderClaim, LeaseGrant, Message, QuorumConfig


class Role(str, enum.Enum):
    LEADER = "leader"
    FOLLOWER = "follower"
    CANDIDATE = "candidate"


@dataclass(frozen=True)
class LeaderTiming:
    heartbeat_interval: int = 5
    follower_timeout: int = 20
    backoff: Tuple[int, int] = (1, 100)
    lease_duration: Optional[int] = 15  # None: leases never expire
    claim_timeout: int = 20
    claim_resend: int = 5

    def __post_init__(self):
        if self.heartbeat_interval <= 0:
            raise ValueError("heartbeat_interval must be positive")
        if self.follower_timeout <= self.heartbeat_interval:
            raise ValueError("follower_timeout must exceed heartbeat_interval")
        lo, hi = self.backoff
        if not 0 <= lo <= hi:
            raise ValueError(f"bad backoff range {self.backoff}")
        if self.lease_duration is not None and self.lease_duration <= 0:
            raise ValueError("lease_duration must be positive")
        if self.claim_timeout <= 0 or self.claim_resend <= 0:
            raise ValueError("claim_timeout and claim_resend must be positive")


def _live(expires_at: Optional[int], now: int) -> bool:
    return expires_at is None or now < expires_at


@dataclass(frozen=True)
class LeaderState:
    id: AgentId
    timing: LeaderTiming = field(default_factory=LeaderTiming)
    role: Role = Role.FOLLOWER
    epoch: int = 0
    last_heartbeat_seen: int = 0
    # candidate side
    candidacy_at: Optional[int] = None
    claim_epoch: Optional[int] = None
    claim_deadline: Optional[int] = None
    next_claim_at: Optional[int] = None
    # grants received: (grantor, epoch, expires_at), latest per grantor
    lease_grants: FrozenSet[Tuple[AgentId, int, Optional[int]]] = frozenset()
    lease_expires_at: Optional[int] = None
    next_heartbeat_at: Optional[int] = None
    # grantor side
    granted_to: Optional[AgentId] = None
    granted_epoch: int = 0
    grant_expires_at: Optional[int] = None

    def live_grants(self, epoch: int, now: int) -> FrozenSet[AgentId]:
        return frozenset(g for g, e, x in self.lease_grants if e == epoch and _live(x, now))


def _quorum_expiry(grants, epoch: int, cfg: QuorumConfig) -> Optional[int]:
    """Time at which fewer than a quorum of the epoch's grants remain live."""
    expiries = [x for _, e, x in grants if e == epoch]
    if len(expiries) < cfg.quorum_size:
        return -1
    # None sorts as +inf
    expiries.sort(key=lambda x: float("inf") if x is None else x, reverse=True)
    return expiries[cfg.quorum_size - 1]


def _to_follower(state: LeaderState, now: int) -> LeaderState:
    return replace(
        state,
        role=Role.FOLLOWER,
        last_heartbeat_seen=now,
        candidacy_at=None,
        claim_epoch=None,
        claim_deadline=None,
        next_claim_at=None,
        lease_grants=frozenset(),
        lease_expires_at=None,
        next_heartbeat_at=None,
    )


def leader_tick(
    state: LeaderState, now: int, rng: random.Random
) -> Tuple[LeaderState, List[Message]]:
    """Advance timers. Returned messages go to every participant, self included."""
    t = state.timing
    if state.role is Role.LEADER:
        if not _live(state.lease_expires_at, now):
            return _to_follower(state, now), []
        if state.next_heartbeat_at is not None and now >= state.next_heartbeat_at:
            state = replace(state, next_heartbeat_at=now + t.heartbeat_interval)
            return state, [Heartbeat(state.id, state.epoch)]
        return state, []

    if state.role is Role.FOLLOWER:
        if now - state.last_heartbeat_seen > t.follower_timeout:
            delay = rng.randint(*t.backoff)
            return replace(state, role=Role.CANDIDATE, candidacy_at=now + delay), []
        return state, []

    # candidate
    if state.candidacy_at is not None:
        if now < state.candidacy_at:
            return state, []
        epoch = state.epoch + 1
        state = replace(
            state,
            candidacy_at=None,
            claim_epoch=epoch,
            claim_deadline=now + t.claim_timeout,
            next_claim_at=now + t.claim_resend,
            lease_grants=frozenset(),
        )
        return state, [LeaderClaim(state.id, epoch)]
    if state.claim_epoch is not None:
        if now >= state.claim_deadline:
            delay = rng.randint(*t.backoff)
            return replace(
                state,
                claim_epoch=None,
                claim_deadline=None,
                next_claim_at=None,
                candidacy_at=now + delay,
            ), []
        if now >= state.next_claim_at:
            state = replace(state, next_claim_at=now + t.claim_resend)
            return state, [LeaderClaim(state.id, state.claim_epoch)]
    return state, []


def on_leader_claim(
    state: LeaderState, claim: LeaderClaim, now: int
) -> Tuple[LeaderState, Optional[LeaseGrant]]:
    holds = state.granted_to is not None and _live(state.grant_expires_at, now)
    if holds and state.granted_to == claim.candidate and state.granted_epoch == claim.epoch:
        # resent claim: repeat the same grant without extending it
        return state, LeaseGrant(claim.candidate, claim.epoch, state.grant_expires_at)
    if claim.epoch <= state.epoch or (holds and state.granted_to != claim.candidate):
        return state, None
    lease = state.timing.lease_duration
    expires = None if lease is None else now + lease
    if claim.candidate != state.id and state.role is not Role.FOLLOWER:
        state = _to_follower(state, now)
    state = replace(
        state,
        epoch=claim.epoch,
        granted_to=claim.candidate,
        granted_epoch=claim.epoch,
        grant_expires_at=expires,
        last_heartbeat_seen=now,
    )
    return state, LeaseGrant(claim.candidate, claim.epoch, expires)


def on_heartbeat(
    state: LeaderState, hb: Heartbeat, now: int
) -> Tuple[LeaderState, Optional[LeaseGrant]]:
    """Reset the follower timer and renew the sender's lease.

    The renewal travels back to the leader as a fresh :class:`LeaseGrant`.
    """
    if hb.epoch < state.epoch:
        return state, None
    if hb.leader != state.id and state.role is not Role.FOLLOWER:
        state = _to_follower(state, now)
    state = replace(state, epoch=hb.epoch, last_heartbeat_seen=now)
    holds = state.granted_to is not None and _live(state.grant_expires_at, now)
    if holds and state.granted_to != hb.leader:
        return state, None
    lease = state.timing.lease_duration
    expires = None if lease is None else now + lease
    state = replace(state, granted_to=hb.leader, granted_epoch=hb.epoch, grant_expires_at=expires)
    return state, LeaseGrant(hb.leader, hb.epoch, expires)


def on_lease_grant(
    state: LeaderState, sender: AgentId, grant: LeaseGrant, now: int, cfg: QuorumConfig
) -> Tuple[LeaderState, List[Message]]:
    if grant.candidate != state.id:
        return state, []
    if state.role is Role.CANDIDATE:
        epoch = state.claim_epoch
    elif state.role is Role.LEADER:
        epoch = state.epoch
    else:
        return state, []
    if grant.epoch != epoch:
        return state, []
    grants = frozenset(g for g in state.lease_grants if g[0] != sender)
    grants |= {(sender, grant.epoch, grant.expires_at)}
    state = replace(state, lease_grants=grants)
    if state.role is Role.LEADER:
        return replace(state, lease_expires_at=_quorum_expiry(grants, epoch, cfg)), []
    if len(state.live_grants(epoch, now)) < cfg.quorum_size:
        return state, []
    state = replace(
        state,
        role=Role.LEADER,
        epoch=max(state.epoch, epoch),
        candidacy_at=None,
        claim_epoch=None,
        claim_deadline=None,
        next_claim_at=None,
        lease_expires_at=_quorum_expiry(grants, epoch, cfg),
        next_heartbeat_at=now + state.timing.heartbeat_interval,
    )
    return state, [Heartbeat(state.id, state.epoch)]


def next_wake(state: LeaderState) -> Optional[int]:
    t = state.timing
    if state.role is Role.LEADER:
        times = [state.next_heartbeat_at, state.lease_expires_at]
    elif state.role is Role.FOLLOWER:
        times = [state.last_heartbeat_seen + t.follower_timeout + 1]
    else:
        times = [state.candidacy_at, state.claim_deadline, state.next_claim_at]
    times = [x for x in times if x is not None]
    return min(times, default=None)

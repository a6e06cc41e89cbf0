"""Trace checks: agreement, the induction list, livelock, lease uniqueness.

Every check is a pure function of a :class:`~paxoslab.trace.Trace` and returns
a :class:`Verdict` (or a :class:`LivelockReport`) with a machine-readable
outcome and a one-line human explanation.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

from .core import AgentId, FullAck, FullProposal, LeaseGrant, Proposal, ProposalNumber, Value
from .trace import Trace


@dataclass
class Verdict:
    check: str
    passed: bool
    explanation: str
    details: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)


def _quorum_size(trace: Trace, quorum: Optional[int]) -> int:
    if quorum is not None:
        return quorum
    n = trace.acceptor_count
    if n is None:
        raise ValueError("trace header has no acceptor count; pass quorum explicitly")
    return n // 2 + 1


# -- agreement ----------------------------------------------------------------


def check_agreement(trace: Trace) -> Verdict:
    """All decisions for the same instance carry the same value."""
    first: Dict[Optional[int], Tuple[int, Value]] = {}
    count = 0
    for ev in trace:
        if ev.kind != "decision":
            continue
        count += 1
        if ev.slot not in first:
            first[ev.slot] = (ev.index, ev.value)
            continue
        idx, value = first[ev.slot]
        if ev.value != value:
            where = "" if ev.slot is None else f" in slot {ev.slot}"
            return Verdict("agreement", False,
                           f"conflicting decisions{where}: {value} at event {idx}, "
                           f"{ev.value} at event {ev.index}",
                           {"events": [idx, ev.index], "values": [str(value), str(ev.value)]})
    if not count:
        return Verdict("agreement", True, "no decisions; safety holds vacuously", {"decisions": 0})
    return Verdict("agreement", True, f"{count} decision(s), all agree", {"decisions": count})


# -- induction list -----------------------------------------------------------


@dataclass
class AckedList:
    first_win: Proposal
    entries: List[Proposal]


def build_acked_list(
    acks: Iterable[Tuple[Proposal, AgentId]], quorum_size: int
) -> Optional[AckedList]:
    """Order every at-least-once acknowledged proposal numbered from the first winner up.

    ``acks`` pairs each acknowledged proposal with the acknowledging acceptor.
    A proposal wins once a quorum of distinct acceptors acknowledged it,
    whether or not its proposer ever heard back. Returns ``None`` if nothing
    has won.
    """
    ackers: Dict[Proposal, set] = defaultdict(set)
    for proposal, who in acks:
        ackers[proposal].add(who)
    winners = [p for p, who in ackers.items() if len(who) >= quorum_size]
    if not winners:
        return None
    first = min(winners, key=lambda p: p.number)
    entries = sorted((p for p in ackers if p.number >= first.number), key=lambda p: p.number)
    return AckedList(first, entries)


def induction_violation(acked: Optional[AckedList]) -> Optional[Proposal]:
    if acked is None:
        return None
    for p in acked.entries:
        if p.value != acked.first_win.value:
            return p
    return None


def trace_acks(trace: Trace) -> List[Tuple[Proposal, AgentId]]:
    """(proposal, acceptor) for every FullAck an acceptor emitted."""
    values: Dict[ProposalNumber, Value] = {}
    acks = []
    for ev in trace:
        if ev.kind != "send":
            continue
        if isinstance(ev.msg, FullProposal):
            p = ev.msg.proposal
            known = values.setdefault(p.number, p.value)
            if known != p.value:
                raise ValueError(f"event {ev.index}: number {p.number} reused with a second value")
        elif isinstance(ev.msg, FullAck):
            value = values.get(ev.msg.number)
            if value is None:
                raise ValueError(f"event {ev.index}: ack for {ev.msg.number} that was never proposed")
            acks.append((Proposal(ev.msg.number, value), ev.src))
    return acks


def check_induction_list(trace: Trace, quorum: Optional[int] = None) -> Verdict:
    try:
        acks = trace_acks(trace)
    except ValueError as exc:
        return Verdict("induction", False, str(exc))
    acked = build_acked_list(acks, _quorum_size(trace, quorum))
    if acked is None:
        return Verdict("induction", True, "no proposal won; vacuous pass", {"entries": []})
    listing = [str(p) for p in acked.entries]
    bad = induction_violation(acked)
    if bad is not None:
        return Verdict("induction", False,
                       f"{bad} was acknowledged but first winner is {acked.first_win}",
                       {"first_win": str(acked.first_win), "entries": listing,
                        "offending": str(bad)})
    return Verdict("induction", True,
                   f"{len(acked.entries)} entr{'y' if len(acked.entries) == 1 else 'ies'} "
                   f"all carry {acked.first_win.value}",
                   {"first_win": str(acked.first_win), "entries": listing})


# -- livelock ---------------------------------------------------------------------


@dataclass
class LivelockReport:
    horizon: int
    decided: bool
    livelock: bool
    restarts: Dict[str, int]
    phase1_pattern: List[str]
    alternating: bool

    @property
    def passed(self) -> bool:
        return not self.livelock

    @property
    def explanation(self) -> str:
        if self.decided:
            return f"decision reached within {self.horizon} events"
        total = sum(self.restarts.values())
        if self.livelock:
            shape = "strictly alternating" if self.alternating else "non-alternating"
            return (f"livelock: no decision in {self.horizon} events, {total} restarts, "
                    f"{shape} phase-1 completions")
        return f"no decision in {self.horizon} events and no restart churn ({total} restarts)"

    def to_json(self) -> Dict[str, Any]:
        d = asdict(self)
        d.update(check="livelock", passed=self.passed, explanation=self.explanation)
        return d


def detect_livelock(trace: Trace, horizon: int = 500, min_restarts: int = 2) -> LivelockReport:
    """Flag runs that keep restarting without ever deciding within ``horizon`` events."""
    restarts: Dict[str, int] = defaultdict(int)
    pattern: List[str] = []
    decided = False
    for ev in trace.events[:horizon]:
        if ev.kind == "decision":
            decided = True
        elif ev.kind == "state_change":
            what = ev.change.get("what")
            if what == "restart":
                restarts[str(ev.agent)] += 1
            elif what == "phase" and ev.change.get("phase") == "proposing":
                pattern.append(str(ev.agent))
    alternating = len(pattern) >= 2 and all(a != b for a, b in zip(pattern, pattern[1:]))
    livelock = not decided and sum(restarts.values()) >= min_restarts and len(pattern) >= 2
    return LivelockReport(horizon, decided, livelock, dict(sorted(restarts.items())), pattern,
                          alternating)


# -- leases -----------------------------------------------------------------------


def _leader_intervals(trace: Trace):
    """Per agent: list of (epoch, start, end) during which its role was leader."""
    open_: Dict[AgentId, Tuple[int, int]] = {}
    spans = defaultdict(list)
    for ev in trace:
        if ev.kind != "state_change" or ev.change.get("what") != "role":
            continue
        a = ev.agent
        if a in open_:
            epoch, start = open_.pop(a)
            spans[a].append((epoch, start, ev.time))
        if ev.change.get("role") == "leader":
            open_[a] = (ev.change["epoch"], ev.time)
    for a, (epoch, start) in open_.items():
        spans[a].append((epoch, start, None))
    return spans


def lease_holders(trace: Trace, quorum: Optional[int] = None):
    """Intervals ``(agent, epoch, start, end)`` where an agent led with a live lease quorum.

    ``end`` is exclusive; ``None`` means the interval was still open when the
    trace ended. Grant expiries are read on the holder's own clock.
    """
    q = _quorum_size(trace, quorum)
    offsets = {AgentId.parse(k): v for k, v in trace.header.get("clock_offsets", {}).items()}
    grants = defaultdict(list)  # holder -> [(time received, grantor, epoch, expires_at)]
    for ev in trace:
        if ev.kind == "deliver" and isinstance(ev.msg, LeaseGrant) and ev.msg.candidate == ev.dst:
            grants[ev.dst].append((ev.time, ev.src, ev.msg.epoch, ev.msg.expires_at))

    out = []
    for agent, spans in _leader_intervals(trace).items():
        off = offsets.get(agent, 0)
        for epoch, start, end in spans:
            mine = [g for g in grants[agent] if g[2] == epoch]
            # points where the live count can change
            points = {start}
            for t, _, _, exp in mine:
                if t >= start:
                    points.add(t)
                if exp is not None:
                    points.add(exp - off)
            points = sorted(p for p in points if p >= start and (end is None or p < end))
            holding_from = None
            for p in points:
                latest: Dict[AgentId, Optional[int]] = {}
                for t, grantor, _, exp in mine:
                    if t <= p:
                        latest[grantor] = exp
                live = sum(1 for exp in latest.values() if exp is None or p + off < exp)
                if live >= q and holding_from is None:
                    holding_from = p
                elif live < q and holding_from is not None:
                    out.append((agent, epoch, holding_from, p))
                    holding_from = None
            if holding_from is not None:
                out.append((agent, epoch, holding_from, end))
    return out


def check_lease_uniqueness(trace: Trace, quorum: Optional[int] = None) -> Verdict:
    """No instant has two distinct leaders each holding a live quorum of grants."""
    spans = lease_holders(trace, quorum)
    inf = float("inf")
    for i, (a, ea, sa, xa) in enumerate(spans):
        for b, eb, sb, xb in spans[i + 1:]:
            if a == b:
                continue
            lo, hi = max(sa, sb), min(inf if xa is None else xa, inf if xb is None else xb)
            if lo < hi:
                return Verdict("lease", False,
                               f"{a} (epoch {ea}) and {b} (epoch {eb}) both held a lease "
                               f"quorum at t={lo}",
                               {"agents": [str(a), str(b)], "epochs": [ea, eb], "time": lo})
    leaders = sorted({str(a) for a, *_ in spans})
    if not spans:
        return Verdict("lease", True, "no leader ever held a lease quorum; vacuous pass",
                       {"leaders": []})
    return Verdict("lease", True,
                   f"{len(spans)} lease tenure(s) by {', '.join(leaders)}, none overlapping",
                   {"leaders": leaders, "tenures": len(spans)})


def failover_delays(trace: Trace) -> List[Tuple[int, Optional[int]]]:
    """For each leader crash: (crash time, delay until another agent became leader)."""
    crashes = [(ev.time, ev.agent) for ev in trace
               if ev.kind == "crash" and ev.reason == "leader"]
    elected = [(ev.time, ev.agent) for ev in trace
               if ev.kind == "state_change" and ev.change.get("what") == "role"
               and ev.change.get("role") == "leader"]
    out = []
    for t, dead in crashes:
        nxt = next((et for et, who in elected if et >= t and who != dead), None)
        out.append((t, None if nxt is None else nxt - t))
    return out


CHECKS = ("agreement", "induction", "livelock", "lease")


def run_checks(trace: Trace, checks: Iterable[str], horizon: int = 500) -> List[Any]:
    results = []
    for name in checks:
        if name == "agreement":
            results.append(check_agreement(trace))
        elif name == "induction":
            results.append(check_induction_list(trace))
        elif name == "livelock":
            results.append(detect_livelock(trace, horizon))
        elif name == "lease":
            results.append(check_lease_uniqueness(trace))
        else:
            raise ValueError(f"unknown check {name!r}; choose from {', '.join(CHECKS)}")
    return results

"""Bounded exhaustive search over Paxos interleavings.

The search state is the product of all acceptor and proposer states, the set
of messages in flight, and the set of (proposal, acceptor) acknowledgments
emitted so far. One step either delivers an in-flight message, drops one, or
restarts a proposer (bounded by ``max_restarts`` per proposer). Because every
message may stay in flight arbitrarily long, choosing which one to deliver
next covers every delay and reordering.

The search is breadth-first with a visited set, so the first violation found
is reached by a shortest step sequence. Agreement (over decisions) and the
induction list (over acknowledgments) are checked in every reached state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

from . import acceptor as acc
from . import proposer as pr
from .checker import build_acked_list, induction_violation
from .core import (
    AgentId,
    FullAck,
    Kind,
    FullProposal,
    Message,
    Mutation,
    PreAck,
    PreProposal,
    QuorumConfig,
    acceptor,
    proposer,
)
from .scenario import ScenarioConfig
from .simnet import schedule_step

InFlight = Tuple[AgentId, AgentId, Message]
Step = Tuple[str, Any]

MAX_PROPOSERS = 3
MAX_ACCEPTORS = 5


@dataclass
class OracleResult:
    verdict: str  # pass | fail | partial
    depth: int
    explored_depth: int
    states: int
    seconds: float
    violation: Optional[str] = None
    counterexample: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> Dict[str, Any]:
        return {
            "verdict": self.verdict,
            "depth": self.depth,
            "explored_depth": self.explored_depth,
            "states": self.states,
            "seconds": round(self.seconds, 3),
            "violation": self.violation,
            "counterexample": self.counterexample,
        }


class _Table:
    """Interns hashable objects as small ints so search states stay cheap to hash."""

    def __init__(self):
        self.ids: Dict[Any, int] = {}
        self.items: List[Any] = []

    def __call__(self, obj) -> int:
        k = self.ids.get(obj)
        if k is None:
            k = self.ids[obj] = len(self.items)
            self.items.append(obj)
        return k


# A search state is (acceptor ids, proposer ids, in-flight ids, ack ids, restarts used),
# every id pointing into one of the explorer's tables.
State = Tuple[Tuple[int, ...], Tuple[int, ...], FrozenSet[int], FrozenSet[int], Tuple[int, ...]]


class _Explorer:
    def __init__(self, cfg: ScenarioConfig, max_restarts: int, drops: bool):
        if cfg.protocol not in ("paxos_multi", "paxos_distinguished"):
            raise ValueError(f"the oracle explores Paxos scenarios, not {cfg.protocol!r}")
        if not 1 <= cfg.proposers <= MAX_PROPOSERS:
            raise ValueError(f"oracle supports at most {MAX_PROPOSERS} proposers")
        if not 1 <= cfg.acceptors <= MAX_ACCEPTORS:
            raise ValueError(f"oracle supports at most {MAX_ACCEPTORS} acceptors")
        if len({cfg.value_for(i) for i in range(cfg.proposers)}) > 2:
            raise ValueError("oracle supports at most 2 distinct values")
        self.cfg = cfg
        self.mutation: Optional[Mutation] = cfg.mutation
        self.quorum = QuorumConfig.majority(cfg.acceptors)
        self.acceptor_ids = [acceptor(i) for i in range(cfg.acceptors)]
        self.max_restarts = max_restarts
        self.drops = drops
        self.agents = _Table()  # acceptor and proposer states
        self.msgs = _Table()  # (src, dst, message)
        self.ack_ids = _Table()  # (proposal, acceptor)
        self._delivered: Dict[Tuple[int, int], Tuple[int, FrozenSet[int], Optional[int]]] = {}
        self._restarted: Dict[int, Tuple[int, FrozenSet[int]]] = {}
        self._checked: Dict[Tuple[Tuple[int, ...], FrozenSet[int]], Optional[str]] = {}

    def initial(self) -> State:
        props, flight = [], set()
        for i in range(self.cfg.proposers):
            s = pr.ProposerState(proposer(i), self.cfg.value_for(i))
            s, msg = pr.start_round(s, 1)
            props.append(self.agents(s))
            flight.update(self.msgs((s.id, a, msg)) for a in self.acceptor_ids)
        accs = tuple(self.agents(acc.AcceptorState(a)) for a in self.acceptor_ids)
        return (accs, tuple(props), frozenset(flight), frozenset(), (0,) * self.cfg.proposers)

    def successors(self, st: State):
        accs, props, flight, acks, restarts = st
        for m in sorted(flight):
            target, out, ack = self._deliver_cached(st, m)
            rest = flight - {m}
            if out:
                rest = rest | out
            dst = self.msgs.items[m][1]
            if dst.kind is Kind.ACCEPTOR:
                j = dst.index
                new_accs, new_props = accs[:j] + (target,) + accs[j + 1:], props
            else:
                j = dst.index
                new_accs, new_props = accs, props[:j] + (target,) + props[j + 1:]
            yield ("deliver", m), (new_accs, new_props, rest,
                                   acks if ack is None else acks | {ack}, restarts)
            if self.drops:
                yield ("drop", m), (accs, props, rest, acks, restarts)
        for i, pid in enumerate(props):
            if restarts[i] >= self.max_restarts:
                continue
            if self.agents.items[pid].phase not in (pr.Phase.PRE_PROPOSING, pr.Phase.PROPOSING):
                continue
            new_pid, out = self._restart_cached(pid)
            used = restarts[:i] + (restarts[i] + 1,) + restarts[i + 1:]
            yield (("restart", i), (accs, props[:i] + (new_pid,) + props[i + 1:],
                                    flight | out, acks, used))

    def _restart_cached(self, pid: int):
        hit = self._restarted.get(pid)
        if hit is None:
            p, directive = pr.abandon(self.agents.items[pid])
            p, msg = pr.start_round(p, directive.round)
            out = frozenset(self.msgs((p.id, a, msg)) for a in self.acceptor_ids)
            hit = self._restarted[pid] = (self.agents(p), out)
        return hit

    def _deliver_cached(self, st: State, m: int):
        src, dst, msg = self.msgs.items[m]
        holder = st[0][dst.index] if dst.kind is Kind.ACCEPTOR else st[1][dst.index]
        key = (holder, m)
        hit = self._delivered.get(key)
        if hit is None:
            hit = self._delivered[key] = self._deliver(self.agents.items[holder], src, msg)
        return hit

    def _deliver(self, target, src: AgentId, msg: Message):
        out: List[Tuple[AgentId, AgentId, Message]] = []
        ack = None
        if isinstance(msg, PreProposal):
            target, reply = acc.on_pre_proposal(target, msg.number, self.mutation)
            if reply is not None:
                out.append((target.id, src, reply))
        elif isinstance(msg, FullProposal):
            target, reply = acc.on_full_proposal(target, msg.proposal, self.mutation)
            if reply is not None:
                out.append((target.id, src, reply))
                ack = self.ack_ids((msg.proposal, target.id))
        elif isinstance(msg, PreAck):
            target, full = pr.on_pre_ack(target, src, msg, self.quorum, self.mutation)
            if full is not None:
                dsts = (sorted(target.promisers) if self.cfg.full_to_promisers_only
                        else self.acceptor_ids)
                out.extend((target.id, a, full) for a in dsts)
        elif isinstance(msg, FullAck):
            target, _ = pr.on_full_ack(target, src, msg, self.quorum, self.mutation)
        return self.agents(target), frozenset(self.msgs(o) for o in out), ack

    def violation(self, st: State) -> Optional[str]:
        key = (st[1], st[3])
        if key not in self._checked:
            self._checked[key] = self._violation(st[1], st[3])
        return self._checked[key]

    def _violation(self, props, acks) -> Optional[str]:
        decided = [self.agents.items[p] for p in props]
        decided = [(p.id, p.active_value) for p in decided if p.phase is pr.Phase.DECIDED]
        if len({v for _, v in decided}) > 1:
            return "agreement: " + ", ".join(f"{who} decided {v}" for who, v in decided)
        acked = build_acked_list([self.ack_ids.items[a] for a in acks], self.quorum.quorum_size)
        bad = induction_violation(acked)
        if bad is not None:
            return f"induction: {bad} acknowledged after {acked.first_win} won"
        return None

    def schedule(self, path: List[Step]) -> List[Dict[str, Any]]:
        out = []
        for op, arg in path:
            if op == "restart":
                out.append(schedule_step("restart", agent=proposer(arg)))
            else:
                src, dst, msg = self.msgs.items[arg]
                out.append(schedule_step(op, src, dst, msg))
        return out


def oracle_explore(
    cfg: ScenarioConfig,
    depth: int = 12,
    max_states: int = 5_000_000,
    max_restarts: int = 1,
    drops: bool = True,
) -> OracleResult:
    """Check every interleaving of up to ``depth`` steps.

    Returns ``fail`` with the shortest counterexample as a ``faults.schedule``
    step list, ``pass`` when every state within the bound is safe, or
    ``partial`` when ``max_states`` ran out first; ``explored_depth`` then
    says how many levels were completely covered.

    ``drops=False`` leaves out the drop branches. That never changes the
    verdict: a dropped message behaves like one that is never delivered, and
    the undropped state has one more step of budget left.
    """
    ex = _Explorer(cfg, max_restarts, drops)
    started = time.perf_counter()
    root = ex.initial()
    index: Dict[State, int] = {root: 0}
    parents: List[int] = [-1]
    steps: List[Optional[Step]] = [None]
    frontier = [root]

    def result(verdict, level, violation=None, at=None):
        path: List[Step] = []
        k = -1 if at is None else index[at]
        while k > 0:
            path.append(steps[k])
            k = parents[k]
        path.reverse()
        return OracleResult(verdict, depth, level, len(index), time.perf_counter() - started,
                            violation, ex.schedule(path))

    bad = ex.violation(root)
    if bad:
        return result("fail", 0, bad, root)
    for level in range(1, depth + 1):
        nxt = []
        for st in frontier:
            here = index[st]
            for step, child in ex.successors(st):
                if child in index:
                    continue
                index[child] = len(parents)
                parents.append(here)
                steps.append(step)
                bad = ex.violation(child)
                if bad:
                    return result("fail", level, bad, child)
                if len(index) > max_states:
                    return result("partial", level - 1)
                nxt.append(child)
        frontier = nxt
        if not frontier:
            break
    return result("pass", depth)


def counterexample_scenario(cfg: ScenarioConfig, found: OracleResult) -> ScenarioConfig:
    """A self-contained scenario that replays ``found`` through the simulator."""
    raw = cfg.to_dict()
    raw["name"] = f"{cfg.name or 'oracle'}-counterexample"
    raw["faults"] = {"drop_probability": 0.0, "delay": {"fixed": 1},
                     "schedule": found.counterexample}
    raw["stop"] = dict(raw["stop"], first_decision=False)
    return ScenarioConfig.from_dict(raw)


def small_config(mutation: Optional[Mutation] = None, proposers: int = 2,
                 acceptors: int = 3) -> ScenarioConfig:
    """The reference oracle instance: two proposers with distinct values."""
    raw = {
        "version": 1,
        "name": "oracle" if mutation is None else f"oracle-{mutation.value}",
        "protocol": "paxos_multi",
        "seed": 0,
        "agents": {"proposers": proposers, "acceptors": acceptors, "learners": 1},
        "values": ["vA", "vB", "vA"][:proposers],
        "proposer": {"mutation": None if mutation is None else mutation.value},
        "stop": {"max_events": 10_000, "max_virtual_time": 10_000, "first_decision": False},
    }
    return ScenarioConfig.from_dict(raw)

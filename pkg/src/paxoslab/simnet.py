"""Deterministic discrete-event network simulator.

Agents are the pure state machines from the protocol modules, wrapped in small
node adapters. The network delays, drops and reorders messages; crashes and
stalls are scheduled; everything random comes from per-purpose substreams of
the scenario seed, so ``run(cfg)`` is a pure function of ``cfg``.

Events are processed in ``(time, seq)`` order. Two execution modes exist:

* timed (default): each send draws a drop decision and a delay, or follows the
  first matching ``faults.script`` rule.
* scheduled: when ``faults.schedule`` is set, nothing is delivered on its
  own. Each step, one per tick, delivers or drops a named in-flight message or
  restarts a proposer. Oracle counterexamples are replayed this way.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

from . import acceptor as acc
from . import leader as ld
from . import naive as nv
from . import proposer as pr
from .core import (
    AgentId,
    DecisionNotice,
    FullAck,
    FullProposal,
    Heartbeat,
    Kind,
    LeaderClaim,
    LeaseGrant,
    Message,
    NaiveAck,
    NaivePropose,
    PreAck,
    PreProposal,
    QuorumConfig,
    acceptor,
    learner,
    proposer,
)
from .scenario import ScenarioConfig, ScriptRule
from .trace import FORMAT, VERSION, Trace, TraceEvent, decode_message, encode_message


class ScheduleError(ValueError):
    pass


def substream(seed: int, purpose: str) -> random.Random:
    """Independent generator for one purpose (drops, delays, backoff, skew)."""
    digest = hashlib.sha256(f"{seed}/{purpose}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass
class Envelope:
    seq: int
    src: AgentId
    dst: AgentId
    send_time: int
    deliver_at: Optional[int]
    payload: Message


# -- node adapters ------------------------------------------------------------


class Node:
    """Imperative shell around one pure state machine."""

    def __init__(self, sim: "Simulation", agent: AgentId):
        self.sim = sim
        self.id = agent

    def start(self, now: int) -> None:
        pass

    def receive(self, src: AgentId, msg: Message, now: int) -> None:
        pass

    def wake(self, now: int) -> None:
        pass


class AcceptorNode(Node):
    def __init__(self, sim, agent):
        super().__init__(sim, agent)
        self.state = acc.AcceptorState(agent)

    def receive(self, src, msg, now):
        m = self.sim.cfg.mutation
        if isinstance(msg, PreProposal):
            self.state, reply = acc.on_pre_proposal(self.state, msg.number, m)
        elif isinstance(msg, FullProposal):
            self.state, reply = acc.on_full_proposal(self.state, msg.proposal, m)
        else:
            return
        if reply is not None:
            self.sim.send(self.id, src, reply)


class LearnerNode(Node):
    def __init__(self, sim, agent):
        super().__init__(sim, agent)
        self.learned: List[DecisionNotice] = []

    def receive(self, src, msg, now):
        if isinstance(msg, DecisionNotice):
            self.learned.append(msg)


class ProposerNode(Node):
    def __init__(self, sim, agent):
        super().__init__(sim, agent)
        cfg = sim.cfg
        self.state = pr.ProposerState(agent, cfg.value_for(agent.index), cfg.policy_for(agent.index))
        if cfg.protocol == "paxos_distinguished":
            self.state = pr.distinguished_mode(self.state)
        self.last_progress = 0
        self.restarts = 0

    def start(self, now):
        self._begin(now, max(1, self.state.next_round()))

    def _begin(self, now, round_):
        self.state, msg = pr.start_round(self.state, round_)
        self.last_progress = now
        self.sim.note(self.id, {"what": "phase", "phase": "pre_proposing",
                                "number": [round_, self.id.index]})
        self.sim.broadcast(self.id, self.sim.acceptors, msg)
        self._arm()

    def _arm(self):
        if self.state.phase in (pr.Phase.PRE_PROPOSING, pr.Phase.PROPOSING):
            at = self.state.stall_deadline
            if at is None:
                at = self.last_progress + self.sim.cfg.stall_timeout + 1
            self.sim.wake_at(self.id, at)

    def receive(self, src, msg, now):
        cfg, sim = self.sim.cfg, self.sim
        before = self.state
        if isinstance(msg, PreAck):
            self.state, out = pr.on_pre_ack(self.state, src, msg, sim.quorum, cfg.mutation)
            if self.state.pre_acks != before.pre_acks:
                self.last_progress = now
            if out is not None:
                n = out.proposal.number
                sim.note(self.id, {"what": "phase", "phase": "proposing",
                                   "number": [n.round, n.proposer.index]})
                targets = sim.acceptors
                if cfg.full_to_promisers_only:
                    targets = sorted(self.state.promisers)
                sim.broadcast(self.id, targets, out)
        elif isinstance(msg, FullAck):
            self.state, notice = pr.on_full_ack(self.state, src, msg, sim.quorum, cfg.mutation)
            if self.state.full_acks != before.full_acks:
                self.last_progress = now
            if notice is not None:
                sim.decide(self.id, notice)
        else:
            return
        if self.state.phase is not before.phase or self.last_progress == now:
            self._arm()

    def wake(self, now):
        s = self.state
        if s.phase not in (pr.Phase.PRE_PROPOSING, pr.Phase.PROPOSING):
            return
        due = s.stall_deadline if s.stall_deadline is not None else (
            self.last_progress + self.sim.cfg.stall_timeout + 1)
        if now < due:
            return
        self.state, restart = pr.on_stall(s, now)
        if restart is not None:
            self.force_restart(now, restart.round)
        elif self.state.stall_deadline is not None and self.state.stall_deadline != s.stall_deadline:
            self.sim.note(self.id, {"what": "stalled", "restart_at": self.state.stall_deadline})
            self._arm()

    def force_restart(self, now, round_=None):
        if round_ is None:
            if self.state.phase not in (pr.Phase.PRE_PROPOSING, pr.Phase.PROPOSING):
                raise ScheduleError(f"{self.id} has nothing to restart")
            self.state, directive = pr.abandon(self.state)
            round_ = directive.round
        self.restarts += 1
        self.sim.note(self.id, {"what": "restart", "round": round_})
        self._begin(now, round_)


class NaiveProposerNode(Node):
    def __init__(self, sim, agent):
        super().__init__(sim, agent)
        self.state = nv.NaiveProposerState(agent, sim.cfg.resend_interval)

    def start(self, now):
        for slot, text in enumerate(self.sim.cfg.values):
            self.state, msg = nv.naive_propose(self.state, slot, self.sim.cfg.value_for(slot), now)
            self.sim.broadcast(self.id, self.sim.acceptors, msg)
        self._arm()

    def _arm(self):
        at = nv.next_resend_at(self.state)
        if at is not None:
            self.sim.wake_at(self.id, at)

    def receive(self, src, msg, now):
        if not isinstance(msg, NaiveAck):
            return
        self.state, notice = nv.naive_on_ack(self.state, src, msg.slot, self.sim.quorum)
        if notice is not None:
            self.sim.decide(self.id, notice)

    def wake(self, now):
        self.state, resends = nv.naive_tick(self.state, now)
        for msg in resends:
            self.sim.note(self.id, {"what": "resend", "slot": msg.slot})
            self.sim.broadcast(self.id, self.sim.acceptors, msg)
        self._arm()


class NaiveAcceptorNode(Node):
    def __init__(self, sim, agent):
        super().__init__(sim, agent)
        self.state = nv.NaiveAcceptorState(agent)

    def receive(self, src, msg, now):
        if isinstance(msg, NaivePropose):
            self.state, ack = nv.naive_on_propose(self.state, msg)
            self.sim.send(self.id, src, ack)


class LeaderNode(Node):
    """Leader election participant; every acceptor runs one."""

    def __init__(self, sim, agent):
        super().__init__(sim, agent)
        self.state = ld.LeaderState(agent, sim.cfg.leader)
        self.offset = sim.offsets.get(agent, 0)
        self.rng = sim.backoff_rng

    def local(self, now):
        return now + self.offset

    def start(self, now):
        t = self.local(now)
        if self.sim.cfg.bootstrap == self.id.index:
            self.state = replace(self.state, role=ld.Role.CANDIDATE, candidacy_at=t,
                                 last_heartbeat_seen=t)
        else:
            self.state = replace(self.state, last_heartbeat_seen=t)
        self._after(ld.LeaderState(self.id, self.sim.cfg.leader), [])
        self.wake(now)

    def _after(self, before, out):
        s = self.state
        if s.role is not before.role or s.epoch != before.epoch:
            self.sim.note(self.id, {"what": "role", "role": s.role.value, "epoch": s.epoch})
        for msg in out:
            self.sim.broadcast(self.id, self.sim.acceptors, msg)
        at = ld.next_wake(s)
        if at is not None:
            self.sim.wake_at(self.id, at - self.offset)

    def receive(self, src, msg, now):
        t = self.local(now)
        before = self.state
        out: List[Message] = []
        if isinstance(msg, LeaderClaim):
            self.state, grant = ld.on_leader_claim(self.state, msg, t)
            if grant is not None:
                self.sim.send(self.id, msg.candidate, grant)
        elif isinstance(msg, Heartbeat):
            self.state, grant = ld.on_heartbeat(self.state, msg, t)
            if grant is not None:
                self.sim.send(self.id, msg.leader, grant)
        elif isinstance(msg, LeaseGrant):
            self.state, out = ld.on_lease_grant(self.state, src, msg, t, self.sim.quorum)
        else:
            return
        self._after(before, out)

    def wake(self, now):
        before = self.state
        self.state, out = ld.leader_tick(self.state, self.local(now), self.rng)
        self._after(before, out)


# -- simulation ---------------------------------------------------------------


@dataclass
class RunSummary:
    stop_reason: str
    decisions: List[Tuple[int, str, str]] = field(default_factory=list)
    restarts: Dict[str, int] = field(default_factory=dict)
    resends: int = 0
    messages: Dict[str, int] = field(default_factory=dict)
    sends: int = 0
    deliveries: int = 0
    drops: int = 0
    in_flight: int = 0
    duration: int = 0

    @property
    def decided(self) -> bool:
        return bool(self.decisions)

    @property
    def first_decision_time(self) -> Optional[int]:
        return self.decisions[0][0] if self.decisions else None


class Simulation:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.quorum = QuorumConfig.majority(cfg.acceptors)
        self.acceptors = [acceptor(i) for i in range(cfg.acceptors)]
        self.learners = [learner(i) for i in range(cfg.learners)]
        self.drop_rng = substream(cfg.seed, "drops")
        self.delay_rng = substream(cfg.seed, "delays")
        self.backoff_rng = substream(cfg.seed, "backoff")
        self.offsets: Dict[AgentId, int] = {}
        if cfg.protocol == "leader_election" and cfg.faults.clock_skew:
            skew_rng = substream(cfg.seed, "skew")
            k = cfg.faults.clock_skew
            self.offsets = {a: skew_rng.randint(-k, k) for a in self.acceptors}
        self.scheduled = cfg.faults.schedule is not None

        self.events: List[TraceEvent] = []
        self.heap: List[Tuple[int, int, str, Any]] = []
        self._seq = itertools.count()
        self._env_seq = itertools.count()
        self.now = 0
        self.crashed: set = set()
        self.stalled: Dict[AgentId, int] = {}
        self.pending_wakes: set = set()
        self.in_flight: Dict[int, Envelope] = {}
        self.script_counts: Counter = Counter()
        self.decisions: List[Tuple[int, str, str]] = []
        self.decided_slots: set = set()
        self.message_counts: Counter = Counter()
        self.nodes: Dict[AgentId, Node] = {}
        self._build_nodes()

    def _build_nodes(self):
        cfg = self.cfg
        if cfg.protocol == "leader_election":
            for a in self.acceptors:
                self.nodes[a] = LeaderNode(self, a)
            return
        naive = cfg.protocol == "naive"
        for i in range(cfg.proposers):
            p = proposer(i)
            self.nodes[p] = NaiveProposerNode(self, p) if naive else ProposerNode(self, p)
        for a in self.acceptors:
            self.nodes[a] = NaiveAcceptorNode(self, a) if naive else AcceptorNode(self, a)
        for lr in self.learners:
            self.nodes[lr] = LearnerNode(self, lr)

    # -- primitives used by nodes -------------------------------------------

    def _emit(self, kind, **fields) -> TraceEvent:
        ev = TraceEvent(len(self.events), self.now, kind, **fields)
        self.events.append(ev)
        return ev

    def _push(self, time, kind, data):
        heapq.heappush(self.heap, (time, next(self._seq), kind, data))

    def note(self, agent: AgentId, change: Dict[str, Any]) -> None:
        self._emit("state_change", agent=agent, change=change)

    def wake_at(self, agent: AgentId, at: int) -> None:
        if self.scheduled:
            return
        at = max(at, self.now)
        if (agent, at) not in self.pending_wakes:
            self.pending_wakes.add((agent, at))
            self._push(at, "wake", agent)

    def broadcast(self, src: AgentId, targets, msg: Message) -> None:
        for dst in targets:
            self.send(src, dst, msg)

    def decide(self, agent: AgentId, notice: DecisionNotice) -> None:
        self._emit("decision", agent=agent, value=notice.value, number=notice.number,
                   slot=notice.slot)
        self.decisions.append((self.now, str(agent), notice.value.payload.hex()))
        if notice.slot is not None:
            self.decided_slots.add(notice.slot)
        self.broadcast(agent, self.learners, notice)

    def _script_rule(self, src, dst, msg) -> Optional[ScriptRule]:
        for k, rule in enumerate(self.cfg.faults.script):
            if rule.src is not None and rule.src != str(src):
                continue
            if rule.dst is not None and rule.dst != str(dst):
                continue
            if rule.type is not None and rule.type != type(msg).__name__:
                continue
            if rule.round is not None:
                number = getattr(msg, "number", None)
                if number is None and isinstance(msg, FullProposal):
                    number = msg.proposal.number
                if number is None or number.round != rule.round:
                    continue
            if rule.nth is not None:
                self.script_counts[k] += 1
                if self.script_counts[k] != rule.nth:
                    continue
            return rule
        return None

    def send(self, src: AgentId, dst: AgentId, msg: Message) -> None:
        seq = next(self._env_seq)
        self.message_counts[type(msg).__name__] += 1
        if self.scheduled and src != dst:
            env = Envelope(seq, src, dst, self.now, None, msg)
            self._emit("send", seq=seq, src=src, dst=dst, msg=msg)
            self.in_flight[seq] = env
            return
        drop, delay, reason = False, 0, "loss"
        if src != dst:  # loopback is instantaneous and lossless
            rule = self._script_rule(src, dst, msg) if self.cfg.faults.script else None
            if rule is not None:
                drop = rule.action == "drop"
                delay = self._draw_delay(rule.delay)
            else:
                p = self.cfg.faults.drop_probability
                drop = p > 0 and self.drop_rng.random() < p
                delay = self._draw_delay()
            if rule is not None:
                reason = "script"
        env = Envelope(seq, src, dst, self.now, self.now + delay, msg)
        self._emit("send", seq=seq, src=src, dst=dst, msg=msg, deliver_at=env.deliver_at)
        if drop:
            self._emit("drop", seq=seq, src=src, dst=dst, msg=msg, reason=reason)
            return
        self.in_flight[seq] = env
        self._push(env.deliver_at, "deliver", env)

    def _draw_delay(self, d=None) -> int:
        d = d or self.cfg.faults.delay
        return d.lo if d.lo == d.hi else self.delay_rng.randint(d.lo, d.hi)

    # -- event loop -------------------------------------------------------

    def _alive(self, agent: AgentId) -> bool:
        return agent not in self.crashed

    def _deliver(self, env: Envelope) -> None:
        dst = env.dst
        if not self._alive(dst):
            del self.in_flight[env.seq]
            self._emit("drop", seq=env.seq, src=env.src, dst=dst, msg=env.payload,
                       reason="crashed")
            return
        until = self.stalled.get(dst)
        if until is not None and until > self.now:
            self._push(until, "deliver", env)  # buffered until the stall ends
            return
        del self.in_flight[env.seq]
        self._emit("deliver", seq=env.seq, src=env.src, dst=dst, msg=env.payload)
        self.nodes[dst].receive(env.src, env.payload, self.now)

    def _leader_crash(self) -> None:
        for a in self.acceptors:
            node = self.nodes[a]
            if self._alive(a) and node.state.role is ld.Role.LEADER:
                self.crashed.add(a)
                self._emit("crash", agent=a, reason="leader")
                return

    def _done(self) -> Optional[str]:
        cfg = self.cfg
        if cfg.first_decision and self.decisions and cfg.protocol != "leader_election":
            if cfg.protocol != "naive" or len(self.decided_slots) == len(cfg.values):
                return "decision"
        if len(self.events) >= cfg.max_events:
            return "max_events"
        return None

    def run(self) -> Trace:
        cfg = self.cfg
        if self.scheduled:
            reason = self._run_schedule()
        else:
            reason = self._run_timed()
        header = {
            "format": FORMAT,
            "version": VERSION,
            "scenario": cfg.to_dict(),
            "result": {"stop": reason, "in_flight": len(self.in_flight)},
        }
        if self.offsets:
            header["clock_offsets"] = {str(a): o for a, o in sorted(self.offsets.items())}
        self.stop_reason = reason
        return Trace(header, self.events)

    def _run_timed(self) -> str:
        cfg = self.cfg
        for a, t in cfg.faults.crashes:
            self._push(t, "crash", a)
        for a, s, u in cfg.faults.stalls:
            self._push(s, "stall", (a, u))
        for t in cfg.faults.leader_crashes:
            self._push(t, "leader_crash", None)
        for agent, node in self.nodes.items():
            t = cfg.start_time(agent.index) if agent.kind is Kind.PROPOSER else 0
            self._push(t, "start", agent)

        while self.heap:
            reason = self._done()
            if reason:
                return reason
            time, _, kind, data = self.heap[0]
            if time > cfg.max_virtual_time:
                return "max_virtual_time"
            heapq.heappop(self.heap)
            self.now = time
            if kind == "deliver":
                self._deliver(data)
            elif kind in ("wake", "start"):
                self.pending_wakes.discard((data, time))
                if not self._alive(data):
                    continue
                until = self.stalled.get(data)
                if until is not None and until > time:
                    self._push(until, kind, data)
                    continue
                node = self.nodes[data]
                node.start(time) if kind == "start" else node.wake(time)
            elif kind == "crash":
                if self._alive(data):
                    self.crashed.add(data)
                    self._emit("crash", agent=data)
            elif kind == "stall":
                agent, until = data
                if self._alive(agent):
                    self.stalled[agent] = max(until, self.stalled.get(agent, 0))
                    self._emit("stall", agent=agent, until=until)
            elif kind == "leader_crash":
                self._leader_crash()
        return self._done() or "quiescent"

    # -- scheduled execution ------------------------------------------------

    def _find(self, step) -> Envelope:
        src, dst = step.get("src"), step.get("dst")
        want = decode_message(step["msg"]) if "msg" in step else None
        for env in self.in_flight.values():
            if src is not None and str(env.src) != src:
                continue
            if dst is not None and str(env.dst) != dst:
                continue
            if want is not None and env.payload != want:
                continue
            return env
        raise ScheduleError(f"no in-flight message matches {step}")

    def _run_schedule(self) -> str:
        for agent, node in self.nodes.items():
            node.start(0)
        for k, step in enumerate(self.cfg.faults.schedule):
            reason = self._done()
            if reason:
                return reason
            self.now = k + 1
            op = step["op"]
            if op == "restart":
                node = self.nodes.get(AgentId.parse(step["agent"]))
                if not isinstance(node, ProposerNode):
                    raise ScheduleError(f"step {k}: {step['agent']} is not a proposer")
                node.force_restart(self.now)
                continue
            env = self._find(step)
            if op == "drop":
                del self.in_flight[env.seq]
                self._emit("drop", seq=env.seq, src=env.src, dst=env.dst, msg=env.payload,
                           reason="script")
            else:
                env.deliver_at = self.now
                self._deliver(env)
        return self._done() or "schedule_end"

    def summary(self) -> RunSummary:
        restarts = {str(a): n.restarts for a, n in self.nodes.items()
                    if isinstance(n, ProposerNode)}
        kinds = Counter(e.kind for e in self.events)
        resends = sum(1 for e in self.events
                      if e.kind == "state_change" and e.change.get("what") == "resend")
        return RunSummary(
            stop_reason=self.stop_reason,
            decisions=list(self.decisions),
            restarts=restarts,
            resends=resends,
            messages=dict(sorted(self.message_counts.items())),
            sends=kinds["send"],
            deliveries=kinds["deliver"],
            drops=kinds["drop"],
            in_flight=len(self.in_flight),
            duration=self.events[-1].time if self.events else 0,
        )


def run(cfg: ScenarioConfig) -> Trace:
    return Simulation(cfg).run()


def run_with_summary(cfg: ScenarioConfig) -> Tuple[Trace, RunSummary]:
    sim = Simulation(cfg)
    trace = sim.run()
    return trace, sim.summary()


def schedule_step(op: str, src: AgentId = None, dst: AgentId = None, msg: Message = None,
                  agent: AgentId = None) -> Dict[str, Any]:
    """Build one ``faults.schedule`` step."""
    if op == "restart":
        return {"op": "restart", "agent": str(agent)}
    return {"op": op, "src": str(src), "dst": str(dst), "msg": encode_message(msg)}

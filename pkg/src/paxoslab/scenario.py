"""Scenario configuration: schema, validation, overrides, bundled scenarios.

Scenarios are JSON documents. Every key is optional except ``version`` and
``protocol``; unknown keys are rejected so typos cannot pass silently::

    {
      "version": 1,
      "name": "duel",
      "protocol": "paxos_multi",          # naive | paxos_multi |
                                          # paxos_distinguished | leader_election
      "seed": 1,
      "agents": {"proposers": 2, "acceptors": 3, "learners": 1},
      "values": ["vA", "vB"],             # per proposer (per slot for naive)
      "faults": {
        "drop_probability": 0.0,
        "delay": {"fixed": 10},           # or {"uniform": [lo, hi]}
        "crashes": [["a1", 50]],
        "stalls": [["a0", 10, 30]],       # agent, from, until
        "leader_crashes": [100],          # crash whoever leads at that time
        "clock_skew": 0,                  # leader election only
        "script": [{"src": "p0", "dst": "a1", "type": "FullProposal",
                    "round": 1, "nth": 1, "action": "drop"},
                   {"type": "PreAck", "action": "deliver", "delay": [15, 25]}],
        "schedule": null                  # explicit step list, see simnet
      },
      "proposer": {"restart": "eager", "wait": 0, "stall_timeout": 25,
                   "start_times": [0, 15], "overrides": {"p1": {"restart": "never"}},
                   "full_to_promisers_only": false, "mutation": null},
      "naive": {"resend_interval": 5},
      "leader": {"heartbeat_interval": 5, "follower_timeout": 20,
                 "backoff": [1, 100], "lease_duration": 15,
                 "claim_timeout": 20, "claim_resend": 5, "bootstrap": 0},
      "stop": {"max_events": 5000, "max_virtual_time": 1000, "first_decision": true}
    }

A timed restart with ``wait`` 0 means eager restart; ``wait`` is rejected for
the other restart modes. ``lease_duration`` null means leases never expire;
when absent it defaults to three heartbeat intervals.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

from .core import AgentId, Kind, Mutation, Value
from .leader import LeaderTiming
from .proposer import RestartPolicy

SCHEMA_VERSION = 1
PROTOCOLS = ("naive", "paxos_multi", "paxos_distinguished", "leader_election")
MESSAGE_TYPES = ("PreProposal", "PreAck", "FullProposal", "FullAck", "NaivePropose",
                 "NaiveAck", "Heartbeat", "LeaderClaim", "LeaseGrant", "DecisionNotice")


class ConfigError(ValueError):
    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class Delay:
    lo: int
    hi: int

    @property
    def max(self) -> int:
        return self.hi

    def to_json(self):
        return {"fixed": self.lo} if self.lo == self.hi else {"uniform": [self.lo, self.hi]}


@dataclass(frozen=True)
class ScriptRule:
    action: str  # drop | deliver
    src: Optional[str] = None
    dst: Optional[str] = None
    type: Optional[str] = None
    round: Optional[int] = None
    nth: Optional[int] = None
    delay: Optional[Delay] = None

    def to_json(self):
        d = {k: v for k, v in self.__dict__.items() if v is not None}
        if self.delay is not None:
            d["delay"] = self.delay.lo if self.delay.lo == self.delay.hi else [self.delay.lo,
                                                                              self.delay.hi]
        return d


@dataclass(frozen=True)
class FaultModel:
    drop_probability: float = 0.0
    delay: Delay = Delay(1, 1)
    crashes: Tuple[Tuple[AgentId, int], ...] = ()
    stalls: Tuple[Tuple[AgentId, int, int], ...] = ()
    leader_crashes: Tuple[int, ...] = ()
    clock_skew: int = 0
    script: Tuple[ScriptRule, ...] = ()
    schedule: Optional[Tuple[Dict[str, Any], ...]] = None


@dataclass(frozen=True)
class ScenarioConfig:
    protocol: str
    name: str = ""
    seed: int = 0
    proposers: int = 1
    acceptors: int = 3
    learners: int = 1
    values: Tuple[str, ...] = ()
    faults: FaultModel = FaultModel()
    restart: RestartPolicy = RestartPolicy()
    restart_overrides: Tuple[Tuple[int, RestartPolicy], ...] = ()
    stall_timeout: int = 10
    start_times: Tuple[int, ...] = ()
    full_to_promisers_only: bool = False
    mutation: Optional[Mutation] = None
    resend_interval: int = 5
    leader: LeaderTiming = LeaderTiming()
    bootstrap: Optional[int] = 0
    max_events: int = 5000
    max_virtual_time: int = 1000
    first_decision: bool = True

    # -- derived ------------------------------------------------------------

    def policy_for(self, index: int) -> RestartPolicy:
        for i, p in self.restart_overrides:
            if i == index:
                return p
        return self.restart

    def value_for(self, index: int) -> Value:
        if index < len(self.values):
            return Value.of(self.values[index])
        return Value.of(f"v{index}")

    def start_time(self, index: int) -> int:
        return self.start_times[index] if index < len(self.start_times) else 0

    # -- (de)serialisation ------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        f = self.faults

        def policy(p: RestartPolicy):
            d = {"restart": p.mode}
            if p.mode == "timed":
                d["wait"] = p.wait
            return d

        lt = self.leader
        return {
            "version": SCHEMA_VERSION,
            "name": self.name,
            "protocol": self.protocol,
            "seed": self.seed,
            "agents": {"proposers": self.proposers, "acceptors": self.acceptors,
                       "learners": self.learners},
            "values": list(self.values),
            "faults": {
                "drop_probability": f.drop_probability,
                "delay": f.delay.to_json(),
                "crashes": [[str(a), t] for a, t in f.crashes],
                "stalls": [[str(a), s, u] for a, s, u in f.stalls],
                "leader_crashes": list(f.leader_crashes),
                "clock_skew": f.clock_skew,
                "script": [r.to_json() for r in f.script],
                "schedule": None if f.schedule is None else [dict(s) for s in f.schedule],
            },
            "proposer": {
                **policy(self.restart),
                "stall_timeout": self.stall_timeout,
                "start_times": list(self.start_times),
                "overrides": {f"p{i}": policy(p) for i, p in self.restart_overrides},
                "full_to_promisers_only": self.full_to_promisers_only,
                "mutation": None if self.mutation is None else self.mutation.value,
            },
            "naive": {"resend_interval": self.resend_interval},
            "leader": {
                "heartbeat_interval": lt.heartbeat_interval,
                "follower_timeout": lt.follower_timeout,
                "backoff": list(lt.backoff),
                "lease_duration": lt.lease_duration,
                "claim_timeout": lt.claim_timeout,
                "claim_resend": lt.claim_resend,
                "bootstrap": self.bootstrap,
            },
            "stop": {"max_events": self.max_events, "max_virtual_time": self.max_virtual_time,
                     "first_decision": self.first_decision},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "ScenarioConfig":
        return _Parser(raw).parse()

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}"]) from None
        except OSError as exc:
            raise ConfigError([f"{path}: {exc.strerror}"]) from None
        return cls.from_dict(raw)

    def with_overrides(self, overrides: Dict[str, Any]) -> "ScenarioConfig":
        """Return a copy with dotted keys replaced, e.g. ``{"faults.drop_probability": 0.2}``."""
        return ScenarioConfig.from_dict(apply_overrides(self.to_dict(), overrides))


def apply_overrides(raw: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    raw = copy.deepcopy(raw)
    for key, value in overrides.items():
        node = raw
        *path, last = key.split(".")
        for part in path:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError([f"{key}: {part} is not a section"])
        node[last] = value
    return raw


class _Parser:
    def __init__(self, raw):
        self.raw = raw
        self.problems: List[str] = []

    def err(self, path, msg):
        self.problems.append(f"{path}: {msg}")

    def section(self, path, allowed) -> Dict[str, Any]:
        node = self.raw.get(path, {}) if path else self.raw
        if node is None:
            node = {}
        if not isinstance(node, dict):
            self.err(path, "must be an object")
            return {}
        for key in node:
            if key not in allowed:
                self.err(f"{path}.{key}" if path else key, "unknown key")
        return node

    def int_(self, node, path, key, default, lo=None, allow_none=False):
        v = node.get(key, default)
        if v is None and allow_none:
            return None
        if not isinstance(v, int) or isinstance(v, bool):
            self.err(f"{path}.{key}" if path else key, f"expected integer, got {v!r}")
            return default
        if lo is not None and v < lo:
            self.err(f"{path}.{key}" if path else key, f"must be >= {lo}")
        return v

    def agent(self, path, text) -> Optional[AgentId]:
        try:
            return AgentId.parse(str(text))
        except ValueError as exc:
            self.err(path, str(exc))
            return None

    def policy(self, path, node) -> RestartPolicy:
        mode = node.get("restart", "eager")
        wait = node.get("wait", 0)
        if mode not in ("eager", "timed", "never"):
            self.err(f"{path}.restart", f"unknown restart mode {mode!r}")
            return RestartPolicy()
        if not isinstance(wait, int) or wait < 0:
            self.err(f"{path}.wait", "must be a non-negative integer")
            return RestartPolicy()
        if mode != "timed" and wait:
            self.err(f"{path}.wait", f"only applies to restart 'timed', not {mode!r}")
            return RestartPolicy()
        if mode == "timed" and wait == 0:
            return RestartPolicy.eager()
        return RestartPolicy(mode, wait if mode == "timed" else 0)

    def parse(self) -> ScenarioConfig:
        if not isinstance(self.raw, dict):
            raise ConfigError(["scenario must be a JSON object"])
        top = self.section(None, {"version", "name", "protocol", "seed", "agents", "values",
                                  "faults", "proposer", "naive", "leader", "stop"})
        version = top.get("version")
        if version != SCHEMA_VERSION:
            self.err("version", f"expected {SCHEMA_VERSION}, got {version!r}")
        protocol = top.get("protocol")
        if protocol not in PROTOCOLS:
            self.err("protocol", f"must be one of {', '.join(PROTOCOLS)}")
        name = str(top.get("name", ""))
        seed = self.int_(top, "", "seed", 0, lo=0)
        if isinstance(seed, int) and seed >= 2**64:
            self.err("seed", "must fit in 64 bits")

        agents = self.section("agents", {"proposers", "acceptors", "learners"})
        n_prop = self.int_(agents, "agents", "proposers", 1, lo=0)
        n_acc = self.int_(agents, "agents", "acceptors", 3, lo=1)
        n_learn = self.int_(agents, "agents", "learners", 1, lo=0)

        values = top.get("values", [])
        if not isinstance(values, list) or not all(isinstance(v, str) and v for v in values):
            self.err("values", "must be a list of non-empty strings")
            values = []

        faults = self.faults(n_prop, n_acc, n_learn)

        prop = self.section("proposer", {"restart", "wait", "stall_timeout", "start_times",
                                         "overrides", "full_to_promisers_only", "mutation"})
        restart = self.policy("proposer", prop)
        stall_timeout = self.int_(prop, "proposer", "stall_timeout", 10, lo=1)
        start_times = prop.get("start_times", [])
        if not isinstance(start_times, list) or not all(
                isinstance(t, int) and t >= 0 for t in start_times):
            self.err("proposer.start_times", "must be a list of non-negative integers")
            start_times = []
        overrides = []
        raw_over = prop.get("overrides", {}) or {}
        if not isinstance(raw_over, dict):
            self.err("proposer.overrides", "must be an object")
            raw_over = {}
        for key, node in sorted(raw_over.items()):
            a = self.agent(f"proposer.overrides.{key}", key)
            if a is None:
                continue
            if a.kind is not Kind.PROPOSER or a.index >= n_prop:
                self.err(f"proposer.overrides.{key}", "no such proposer")
                continue
            overrides.append((a.index, self.policy(f"proposer.overrides.{key}", node or {})))
        promisers_only = bool(prop.get("full_to_promisers_only", False))
        mutation = prop.get("mutation")
        if mutation is not None:
            try:
                mutation = Mutation(mutation)
            except ValueError:
                self.err("proposer.mutation",
                         f"unknown mutation; one of {', '.join(m.value for m in Mutation)}")
                mutation = None

        naive = self.section("naive", {"resend_interval"})
        resend = self.int_(naive, "naive", "resend_interval", 5, lo=1)

        lead = self.section("leader", {"heartbeat_interval", "follower_timeout", "backoff",
                                       "lease_duration", "claim_timeout", "claim_resend",
                                       "bootstrap"})
        hb = self.int_(lead, "leader", "heartbeat_interval", 5, lo=1)
        lease = self.int_(lead, "leader", "lease_duration", 3 * hb, lo=1, allow_none=True)
        backoff = lead.get("backoff", [1, 100])
        if (not isinstance(backoff, list) or len(backoff) != 2
                or not all(isinstance(b, int) for b in backoff)):
            self.err("leader.backoff", "must be [min, max]")
            backoff = [1, 100]
        bootstrap = self.int_(lead, "leader", "bootstrap", 0, lo=0, allow_none=True)
        if bootstrap is not None and bootstrap >= n_acc:
            self.err("leader.bootstrap", "no such acceptor")
        timing = None
        try:
            timing = LeaderTiming(
                heartbeat_interval=hb,
                follower_timeout=self.int_(lead, "leader", "follower_timeout", 20, lo=1),
                backoff=tuple(backoff),
                lease_duration=lease,
                claim_timeout=self.int_(lead, "leader", "claim_timeout", 20, lo=1),
                claim_resend=self.int_(lead, "leader", "claim_resend", hb, lo=1),
            )
        except ValueError as exc:
            self.err("leader", str(exc))

        stop = self.section("stop", {"max_events", "max_virtual_time", "first_decision"})
        max_events = self.int_(stop, "stop", "max_events", 5000, lo=1)
        max_time = self.int_(stop, "stop", "max_virtual_time", 1000, lo=0)
        first_decision = stop.get("first_decision", True)
        if not isinstance(first_decision, bool):
            self.err("stop.first_decision", "must be a boolean")
            first_decision = True

        # protocol-specific requirements
        if protocol in ("naive", "paxos_multi", "paxos_distinguished") and n_prop < 1:
            self.err("agents.proposers", f"{protocol} needs at least one proposer")
        if protocol in ("naive", "paxos_distinguished") and n_prop > 1:
            self.err("agents.proposers",
                     f"{protocol} allows exactly one active proposer, got {n_prop}")
        if protocol == "naive" and not values:
            self.err("values", "naive needs one value per slot")
        if protocol == "leader_election" and n_prop:
            self.err("agents.proposers", "leader_election runs on acceptors only")
        if protocol != "leader_election" and faults.leader_crashes:
            self.err("faults.leader_crashes", "only meaningful for leader_election")

        if self.problems:
            raise ConfigError(self.problems)
        return ScenarioConfig(
            protocol=protocol, name=name, seed=seed, proposers=n_prop, acceptors=n_acc,
            learners=n_learn, values=tuple(values), faults=faults, restart=restart,
            restart_overrides=tuple(overrides), stall_timeout=stall_timeout,
            start_times=tuple(start_times), full_to_promisers_only=promisers_only,
            mutation=mutation, resend_interval=resend, leader=timing, bootstrap=bootstrap,
            max_events=max_events, max_virtual_time=max_time, first_decision=first_decision,
        )

    def faults(self, n_prop, n_acc, n_learn) -> FaultModel:
        f = self.section("faults", {"drop_probability", "delay", "crashes", "stalls",
                                    "leader_crashes", "clock_skew", "script", "schedule"})
        counts = {Kind.PROPOSER: n_prop, Kind.ACCEPTOR: n_acc, Kind.LEARNER: n_learn}

        def known(path, text):
            a = self.agent(path, text)
            if a is not None and a.index >= counts[a.kind]:
                self.err(path, f"agent {a} does not exist")
                return None
            return a

        p = f.get("drop_probability", 0.0)
        if not isinstance(p, (int, float)) or isinstance(p, bool) or not 0.0 <= p <= 1.0:
            self.err("faults.drop_probability", "must be a number in [0, 1]")
            p = 0.0

        delay = Delay(1, 1)
        raw = f.get("delay", {"fixed": 1})
        if isinstance(raw, dict) and set(raw) == {"fixed"} and isinstance(raw["fixed"], int) \
                and raw["fixed"] >= 0:
            delay = Delay(raw["fixed"], raw["fixed"])
        elif (isinstance(raw, dict) and set(raw) == {"uniform"} and isinstance(raw["uniform"], list)
              and len(raw["uniform"]) == 2 and all(isinstance(x, int) for x in raw["uniform"])
              and 0 <= raw["uniform"][0] <= raw["uniform"][1]):
            delay = Delay(*raw["uniform"])
        else:
            self.err("faults.delay", 'expected {"fixed": d} or {"uniform": [lo, hi]}')

        crashes = []
        for k, item in enumerate(f.get("crashes", []) or []):
            if not (isinstance(item, list) and len(item) == 2 and isinstance(item[1], int)):
                self.err(f"faults.crashes[{k}]", "expected [agent, time]")
                continue
            a = known(f"faults.crashes[{k}]", item[0])
            if a is not None:
                crashes.append((a, item[1]))
        stalls = []
        for k, item in enumerate(f.get("stalls", []) or []):
            if not (isinstance(item, list) and len(item) == 3
                    and all(isinstance(x, int) for x in item[1:]) and item[1] <= item[2]):
                self.err(f"faults.stalls[{k}]", "expected [agent, from, until] with from <= until")
                continue
            a = known(f"faults.stalls[{k}]", item[0])
            if a is not None:
                stalls.append((a, item[1], item[2]))
        leader_crashes = f.get("leader_crashes", []) or []
        if not all(isinstance(t, int) and t >= 0 for t in leader_crashes):
            self.err("faults.leader_crashes", "must be a list of times")
            leader_crashes = []
        skew = f.get("clock_skew", 0)
        if not isinstance(skew, int) or skew < 0:
            self.err("faults.clock_skew", "must be a non-negative integer")
            skew = 0

        script = []
        for k, rule in enumerate(f.get("script", []) or []):
            path = f"faults.script[{k}]"
            if not isinstance(rule, dict):
                self.err(path, "must be an object")
                continue
            extra = set(rule) - {"action", "src", "dst", "type", "round", "nth", "delay"}
            if extra:
                self.err(path, f"unknown keys {sorted(extra)}")
            if rule.get("action") not in ("drop", "deliver"):
                self.err(f"{path}.action", "must be drop or deliver")
                continue
            if rule.get("type") is not None and rule["type"] not in MESSAGE_TYPES:
                self.err(f"{path}.type", "unknown message type")
            for key in ("src", "dst"):
                if rule.get(key) is not None:
                    known(f"{path}.{key}", rule[key])
            delay_rule = rule.get("delay")
            if delay_rule is not None:
                if isinstance(delay_rule, int) and delay_rule >= 0:
                    delay_rule = Delay(delay_rule, delay_rule)
                elif (isinstance(delay_rule, list) and len(delay_rule) == 2
                      and all(isinstance(x, int) for x in delay_rule)
                      and 0 <= delay_rule[0] <= delay_rule[1]):
                    delay_rule = Delay(*delay_rule)
                else:
                    self.err(f"{path}.delay", "expected d or [lo, hi]")
                    delay_rule = None
            script.append(ScriptRule(delay=delay_rule, **{
                k: rule.get(k) for k in ("action", "src", "dst", "type", "round", "nth")}))

        schedule = f.get("schedule")
        if schedule is not None:
            if not isinstance(schedule, list):
                self.err("faults.schedule", "must be a list of steps")
                schedule = None
            else:
                for k, step in enumerate(schedule):
                    if not isinstance(step, dict) or step.get("op") not in (
                            "deliver", "drop", "restart"):
                        self.err(f"faults.schedule[{k}]", "op must be deliver, drop or restart")
                schedule = tuple(schedule)

        return FaultModel(drop_probability=float(p), delay=delay, crashes=tuple(crashes),
                          stalls=tuple(stalls), leader_crashes=tuple(leader_crashes),
                          clock_skew=skew, script=tuple(script), schedule=schedule)


# -- bundled scenarios --------------------------------------------------------


def script_duel(seed: int = 1, restart: str = "eager", wait: int = 0,
                jitter: bool = False) -> ScenarioConfig:
    """Two proposers that keep pre-empting each other.

    Pre-proposals and acks take 5 ticks, full proposals 20, and the stall
    timeout (25) covers a full phase-2 round trip, so a proposer running
    alone always decides. The second proposer starts at t=15: its
    pre-proposal overtakes the first proposer's slow full proposal, and the
    first proposer's restart in turn overtakes the second's. With eager
    restarts this repeats forever. ``jitter`` draws the delays from [4, 6] and
    [19, 21] instead (stall timeout 27, second start at 18), which keeps the
    duel going for a while but lets seeds break the pattern; a full two-phase
    round then takes at most 39 ticks.
    """
    base = {"uniform": [4, 6]} if jitter else {"fixed": 5}
    slow = [19, 21] if jitter else 20
    stall = 27 if jitter else 25
    second = 18 if jitter else 15
    raw = {
        "version": SCHEMA_VERSION,
        "name": "duel",
        "protocol": "paxos_multi",
        "seed": seed,
        "agents": {"proposers": 2, "acceptors": 3, "learners": 1},
        "values": ["vA", "vB"],
        "faults": {"delay": base,
                   "script": [{"type": "FullProposal", "action": "deliver", "delay": slow}]},
        "proposer": {"restart": restart, "wait": wait, "stall_timeout": stall,
                     "start_times": [0, second]},
        "stop": {"max_events": 500, "max_virtual_time": 5000, "first_decision": True},
    }
    return ScenarioConfig.from_dict(raw)


def _bundled() -> Dict[str, Dict[str, Any]]:
    duel = script_duel().to_dict()
    recovery = script_duel(restart="timed", wait=40, jitter=True).to_dict()
    recovery["name"] = "timeout-recovery"
    recovery["stop"] = {"max_events": 5000, "max_virtual_time": 400, "first_decision": True}
    return {
        "duel": duel,
        "timeout-recovery": recovery,
        "distinguished": {
            "version": SCHEMA_VERSION, "name": "distinguished",
            "protocol": "paxos_distinguished", "seed": 1,
            "agents": {"proposers": 1, "acceptors": 3, "learners": 1},
            "values": ["vA"], "faults": {"delay": {"fixed": 2}},
            "stop": {"max_events": 1000, "max_virtual_time": 1000, "first_decision": True},
        },
        "naive-lossy": {
            "version": SCHEMA_VERSION, "name": "naive-lossy", "protocol": "naive", "seed": 1,
            "agents": {"proposers": 1, "acceptors": 3, "learners": 1},
            "values": ["v0", "v1", "v2"],
            "faults": {"drop_probability": 0.3, "delay": {"uniform": [1, 2]}},
            "naive": {"resend_interval": 5},
            "stop": {"max_events": 20000, "max_virtual_time": 10000, "first_decision": True},
        },
        "leader-failover": {
            "version": SCHEMA_VERSION, "name": "leader-failover",
            "protocol": "leader_election", "seed": 1,
            "agents": {"proposers": 0, "acceptors": 5, "learners": 0},
            "faults": {"drop_probability": 0.1, "delay": {"uniform": [1, 3]},
                       "leader_crashes": [100, 300]},
            "leader": {"heartbeat_interval": 5, "follower_timeout": 20, "backoff": [1, 100],
                       "lease_duration": 15, "claim_timeout": 20, "claim_resend": 5,
                       "bootstrap": 0},
            "stop": {"max_events": 20000, "max_virtual_time": 600, "first_decision": False},
        },
    }


BUNDLED = tuple(_bundled())


def bundled(name: str) -> ScenarioConfig:
    scenarios = _bundled()
    if name not in scenarios:
        raise ConfigError([f"no bundled scenario {name!r}; one of {', '.join(scenarios)}"])
    return ScenarioConfig.from_dict(scenarios[name])

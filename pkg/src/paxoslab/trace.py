"""Line-delimited trace format shared by the simulator and the checkers.

A trace file is UTF-8 text, one JSON object per line, keys sorted:

* line 1, the header::

    {"format": "paxoslab-trace", "version": 1, "scenario": {...},
     "clock_offsets": {...}, "result": {...}}

  ``scenario`` is the complete configuration (seed included), so every trace
  can be re-executed. ``result`` holds the stop reason and the number of
  envelopes still in flight.

* every following line is one event::

    {"i": 0, "t": 0, "kind": "send", "seq": 0, "src": "p0", "dst": "a0",
     "deliver_at": 10, "msg": {"type": "PreProposal", "number": [1, 0]}}

  ``i`` increases by one per line and ``t`` never decreases. ``kind`` is one
  of send, deliver, drop, crash, stall, state_change, decision. Optional keys:
  ``seq`` (envelope id), ``src``/``dst`` (message events), ``agent``
  (crash/stall/state_change/decision), ``msg``, ``deliver_at``, ``until``
  (stall), ``reason`` (drop: loss, crashed, script), ``change``
  (state_change), ``value``/``number``/``slot`` (decision).

Proposal numbers are ``[round, proposer_index]``; values are hex strings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional

from .core import (
    AgentId,
    DecisionNotice,
    FullAck,
    FullProposal,
    Heartbeat,
    LeaderClaim,
    LeaseGrant,
    Message,
    NaiveAck,
    NaivePropose,
    PreAck,
    PreProposal,
    Proposal,
    ProposalNumber,
    Value,
    proposer,
)

FORMAT = "paxoslab-trace"
VERSION = 1

EVENT_KINDS = ("send", "deliver", "drop", "crash", "stall", "state_change", "decision")


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TraceVersionError(TraceFormatError):
    pass


# -- value codec ------------------------------------------------------------


def enc_number(n: Optional[ProposalNumber]):
    return None if n is None else [n.round, n.proposer.index]


def dec_number(raw) -> Optional[ProposalNumber]:
    if raw is None:
        return None
    r, p = raw
    return ProposalNumber(int(r), proposer(int(p)))


def enc_value(v: Value) -> str:
    return v.payload.hex()


def dec_value(raw: str) -> Value:
    return Value(bytes.fromhex(raw))


def enc_proposal(p: Optional[Proposal]):
    if p is None:
        return None
    return {"number": enc_number(p.number), "value": enc_value(p.value)}


def dec_proposal(raw) -> Optional[Proposal]:
    if raw is None:
        return None
    return Proposal(dec_number(raw["number"]), dec_value(raw["value"]))


def encode_message(m: Message) -> Dict[str, Any]:
    if isinstance(m, PreProposal):
        return {"type": "PreProposal", "number": enc_number(m.number)}
    if isinstance(m, PreAck):
        return {"type": "PreAck", "number": enc_number(m.number), "attached": enc_proposal(m.attached)}
    if isinstance(m, FullProposal):
        return {"type": "FullProposal", "proposal": enc_proposal(m.proposal)}
    if isinstance(m, FullAck):
        return {"type": "FullAck", "number": enc_number(m.number)}
    if isinstance(m, NaivePropose):
        return {"type": "NaivePropose", "slot": m.slot, "value": enc_value(m.value)}
    if isinstance(m, NaiveAck):
        return {"type": "NaiveAck", "slot": m.slot}
    if isinstance(m, Heartbeat):
        return {"type": "Heartbeat", "leader": str(m.leader), "epoch": m.epoch}
    if isinstance(m, LeaderClaim):
        return {"type": "LeaderClaim", "candidate": str(m.candidate), "epoch": m.epoch}
    if isinstance(m, LeaseGrant):
        return {"type": "LeaseGrant", "candidate": str(m.candidate), "epoch": m.epoch,
                "expires_at": m.expires_at}
    if isinstance(m, DecisionNotice):
        return {"type": "DecisionNotice", "value": enc_value(m.value),
                "number": enc_number(m.number), "slot": m.slot}
    raise TypeError(f"cannot encode {m!r}")


def decode_message(d: Dict[str, Any]) -> Message:
    t = d["type"]
    if t == "PreProposal":
        return PreProposal(dec_number(d["number"]))
    if t == "PreAck":
        return PreAck(dec_number(d["number"]), dec_proposal(d.get("attached")))
    if t == "FullProposal":
        return FullProposal(dec_proposal(d["proposal"]))
    if t == "FullAck":
        return FullAck(dec_number(d["number"]))
    if t == "NaivePropose":
        return NaivePropose(int(d["slot"]), dec_value(d["value"]))
    if t == "NaiveAck":
        return NaiveAck(int(d["slot"]))
    if t == "Heartbeat":
        return Heartbeat(AgentId.parse(d["leader"]), int(d["epoch"]))
    if t == "LeaderClaim":
        return LeaderClaim(AgentId.parse(d["candidate"]), int(d["epoch"]))
    if t == "LeaseGrant":
        return LeaseGrant(AgentId.parse(d["candidate"]), int(d["epoch"]), d.get("expires_at"))
    if t == "DecisionNotice":
        return DecisionNotice(dec_value(d["value"]), dec_number(d.get("number")), d.get("slot"))
    raise ValueError(f"unknown message type {t!r}")


# -- events -----------------------------------------------------------------


@dataclass
class TraceEvent:
    index: int
    time: int
    kind: str
    seq: Optional[int] = None
    src: Optional[AgentId] = None
    dst: Optional[AgentId] = None
    agent: Optional[AgentId] = None
    msg: Optional[Message] = None
    deliver_at: Optional[int] = None
    until: Optional[int] = None
    reason: Optional[str] = None
    change: Optional[Dict[str, Any]] = None
    value: Optional[Value] = None
    number: Optional[ProposalNumber] = None
    slot: Optional[int] = None

    def to_json(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {"i": self.index, "t": self.time, "kind": self.kind}
        for key in ("seq", "deliver_at", "until", "reason", "change", "slot"):
            v = getattr(self, key)
            if v is not None:
                d[key] = v
        for key in ("src", "dst", "agent"):
            v = getattr(self, key)
            if v is not None:
                d[key] = str(v)
        if self.msg is not None:
            d["msg"] = encode_message(self.msg)
        if self.value is not None:
            d["value"] = enc_value(self.value)
        if self.number is not None:
            d["number"] = enc_number(self.number)
        return d

    @classmethod
    def from_json(cls, d: Dict[str, Any]) -> "TraceEvent":
        ev = cls(int(d["i"]), int(d["t"]), d["kind"])
        if ev.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {ev.kind!r}")
        for key in ("seq", "deliver_at", "until", "reason", "change", "slot"):
            setattr(ev, key, d.get(key))
        for key in ("src", "dst", "agent"):
            if key in d:
                setattr(ev, key, AgentId.parse(d[key]))
        if "msg" in d:
            ev.msg = decode_message(d["msg"])
        if "value" in d:
            ev.value = dec_value(d["value"])
        if "number" in d:
            ev.number = dec_number(d["number"])
        return ev


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class Trace:
    header: Dict[str, Any]
    events: List[TraceEvent] = field(default_factory=list)

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    @property
    def scenario(self) -> Dict[str, Any]:
        return self.header.get("scenario", {})

    @property
    def acceptor_count(self) -> Optional[int]:
        agents = self.scenario.get("agents", {})
        return agents.get("acceptors")

    def dumps(self) -> str:
        lines = [_dump(self.header)]
        lines.extend(_dump(e.to_json()) for e in self.events)
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, require_header: bool = True) -> "Trace":
        lines = text.splitlines()
        header: Dict[str, Any] = {}
        events = []
        for n, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"invalid JSON: {exc.msg}", n) from None
            if not isinstance(obj, dict):
                raise TraceFormatError("record is not an object", n)
            if n == 1 and "format" in obj:
                if obj["format"] != FORMAT:
                    raise TraceFormatError(f"unknown format {obj['format']!r}", n)
                if obj.get("version") != VERSION:
                    raise TraceVersionError(
                        f"trace format version {obj.get('version')!r} is not supported "
                        f"(expected {VERSION})", n)
                header = obj
                continue
            try:
                ev = TraceEvent.from_json(obj)
            except (KeyError, ValueError, TypeError) as exc:
                raise TraceFormatError(f"malformed event: {exc}", n) from None
            if events and (ev.index <= events[-1].index or ev.time < events[-1].time):
                raise TraceFormatError("event index/time out of order", n)
            events.append(ev)
        if require_header and not header:
            raise TraceFormatError("missing trace header", 1)
        return cls(header, events)

    @classmethod
    def read(cls, path, require_header: bool = True) -> "Trace":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read(), require_header=require_header)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

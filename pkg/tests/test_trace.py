import json

import pytest
from hypothesis import given, strategies as st

from paxoslab import bundled, run
from paxoslab.core import (
    DecisionNotice,
    FullAck,
    FullProposal,
    Heartbeat,
    LeaderClaim,
    LeaseGrant,
    NaiveAck,
    NaivePropose,
    PreAck,
    PreProposal,
    Proposal,
    ProposalNumber,
    Value,
    acceptor,
    proposer,
)
from paxoslab.trace import (
    Trace,
    TraceFormatError,
    TraceVersionError,
    decode_message,
    encode_message,
)

num = st.builds(lambda r, p: ProposalNumber(r, proposer(p)), st.integers(1, 99), st.integers(0, 9))
val = st.builds(Value, st.binary(min_size=1, max_size=8))
agent = st.builds(acceptor, st.integers(0, 9))
expiry = st.one_of(st.none(), st.integers(0, 10_000))


@st.composite
def pre_acks(draw):
    number = draw(num)
    if number.round > 1 and draw(st.booleans()):
        return PreAck(number, Proposal(ProposalNumber(number.round - 1, proposer(0)), draw(val)))
    return PreAck(number)


messages = st.one_of(
    st.builds(PreProposal, num),
    pre_acks(),
    st.builds(lambda n, v: FullProposal(Proposal(n, v)), num, val),
    st.builds(FullAck, num),
    st.builds(NaivePropose, st.integers(0, 50), val),
    st.builds(NaiveAck, st.integers(0, 50)),
    st.builds(Heartbeat, agent, st.integers(0, 50)),
    st.builds(LeaderClaim, agent, st.integers(0, 50)),
    st.builds(LeaseGrant, agent, st.integers(0, 50), expiry),
    st.builds(DecisionNotice, val, st.one_of(st.none(), num), st.one_of(st.none(), st.integers(0, 9))),
)


@given(messages)
def test_message_codec_round_trip(msg):
    assert decode_message(json.loads(json.dumps(encode_message(msg)))) == msg


@pytest.mark.parametrize("name", ["duel", "naive-lossy", "leader-failover"])
def test_trace_text_round_trip(name):
    text = run(bundled(name)).dumps()
    again = Trace.loads(text)
    assert again.dumps() == text
    assert again.header["scenario"]["name"] == name


def test_events_are_ordered():
    trace = run(bundled("timeout-recovery"))
    assert [e.index for e in trace] == list(range(len(trace)))
    assert all(a.time <= b.time for a, b in zip(trace.events, trace.events[1:]))


def _small_text():
    return run(bundled("distinguished")).dumps()


def test_malformed_line_reports_its_number():
    lines = _small_text().splitlines()
    lines[3] = "{not json"
    with pytest.raises(TraceFormatError) as info:
        Trace.loads("\n".join(lines))
    assert info.value.line == 4


def test_unknown_event_kind_is_rejected():
    lines = _small_text().splitlines()
    ev = json.loads(lines[2])
    ev["kind"] = "teleport"
    lines[2] = json.dumps(ev)
    with pytest.raises(TraceFormatError) as info:
        Trace.loads("\n".join(lines))
    assert info.value.line == 3


def test_out_of_order_events_are_rejected():
    lines = _small_text().splitlines()
    lines[2], lines[3] = lines[3], lines[2]
    with pytest.raises(TraceFormatError):
        Trace.loads("\n".join(lines))


def test_missing_header():
    body = "\n".join(_small_text().splitlines()[1:])
    with pytest.raises(TraceFormatError):
        Trace.loads(body)
    assert len(Trace.loads(body, require_header=False)) > 0


def test_old_version_is_refused():
    lines = _small_text().splitlines()
    header = json.loads(lines[0])
    header["version"] = 0
    lines[0] = json.dumps(header)
    with pytest.raises(TraceVersionError):
        Trace.loads("\n".join(lines))

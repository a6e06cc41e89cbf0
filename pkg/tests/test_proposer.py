import pytest
from hypothesis import given, strategies as st

from paxoslab import proposer as pr
from paxoslab.core import (
    DecisionNotice,
    FullAck,
    FullProposal,
    Mutation,
    PreAck,
    PreProposal,
    Proposal,
    ProposalNumber,
    QuorumConfig,
    Value,
    acceptor,
    proposer,
)
from paxoslab.proposer import Phase, ProposerState, RestartPolicy

Q3 = QuorumConfig.majority(3)
vA, vB, vC = Value.of("vA"), Value.of("vB"), Value.of("vC")
a0, a1, a2 = acceptor(0), acceptor(1), acceptor(2)


def n(r, p):
    return ProposalNumber(r, proposer(p))


def started(p=0, value=vC, round_=1, policy=None):
    s = ProposerState(proposer(p), value, policy or RestartPolicy.eager())
    return pr.start_round(s, round_)[0]


def test_start_round_broadcasts_pre_proposal():
    s, msg = pr.start_round(ProposerState(proposer(0), vA), 1)
    assert msg == PreProposal(n(1, 0))
    assert s.phase is Phase.PRE_PROPOSING and s.current_number == n(1, 0)


def test_round_reuse_is_rejected():
    s = started(0, round_=1)
    s, _ = pr.abandon(s)
    with pytest.raises(pr.ProtocolError):
        pr.start_round(s, 1)


def test_start_round_needs_idle():
    with pytest.raises(pr.ProtocolError):
        pr.start_round(started(), 2)


def test_inherits_attached_value():
    s = started(1, vC, round_=2)
    s, out = pr.on_pre_ack(s, a0, PreAck(n(2, 1), None), Q3)
    assert out is None
    s, out = pr.on_pre_ack(s, a1, PreAck(n(2, 1), Proposal(n(1, 0), vA)), Q3)
    assert out == FullProposal(Proposal(n(2, 1), vA))
    assert s.phase is Phase.PROPOSING and s.active_value == vA


def test_uses_own_value_without_attachments():
    s = started(1, vC, round_=2)
    s, _ = pr.on_pre_ack(s, a0, PreAck(n(2, 1)), Q3)
    _, out = pr.on_pre_ack(s, a1, PreAck(n(2, 1)), Q3)
    assert out == FullProposal(Proposal(n(2, 1), vC))


def test_highest_attachment_wins():
    s = started(1, vC, round_=4)
    s, _ = pr.on_pre_ack(s, a0, PreAck(n(4, 1), Proposal(n(1, 0), vA)), Q3)
    _, out = pr.on_pre_ack(s, a2, PreAck(n(4, 1), Proposal(n(3, 2), vB)), Q3)
    assert out.proposal.value == vB


def test_stale_and_duplicate_pre_acks_are_ignored():
    s = started(0, round_=2)
    s2, out = pr.on_pre_ack(s, a0, PreAck(n(1, 0)), Q3)
    assert out is None and s2.pre_acks == s.pre_acks
    s, _ = pr.on_pre_ack(s, a0, PreAck(n(2, 0)), Q3)
    s, out = pr.on_pre_ack(s, a0, PreAck(n(2, 0)), Q3)
    assert out is None and len(s.pre_acks) == 1


def _proposing():
    s = started(0, vA)
    s, _ = pr.on_pre_ack(s, a0, PreAck(n(1, 0)), Q3)
    s, _ = pr.on_pre_ack(s, a1, PreAck(n(1, 0)), Q3)
    return s


def test_quorum_of_full_acks_decides():
    s, notice = pr.on_full_ack(_proposing(), a0, FullAck(n(1, 0)), Q3)
    assert notice is None and s.phase is Phase.PROPOSING
    s, notice = pr.on_full_ack(s, a2, FullAck(n(1, 0)), Q3)
    assert notice == DecisionNotice(vA, number=n(1, 0))
    assert s.phase is Phase.DECIDED


def test_full_ack_for_superseded_number_is_ignored():
    s, _ = pr.abandon(_proposing())
    s, _ = pr.start_round(s, 2)
    s, _ = pr.on_pre_ack(s, a0, PreAck(n(2, 0)), Q3)
    s, _ = pr.on_pre_ack(s, a1, PreAck(n(2, 0)), Q3)
    s, _ = pr.on_full_ack(s, a0, FullAck(n(1, 0)), Q3)
    s, notice = pr.on_full_ack(s, a1, FullAck(n(1, 0)), Q3)
    assert notice is None and not s.full_acks
    # the mutant counts them
    s, _ = pr.on_full_ack(s, a0, FullAck(n(1, 0)), Q3, Mutation.STALE_ACK_COUNT)
    s, notice = pr.on_full_ack(s, a1, FullAck(n(1, 0)), Q3, Mutation.STALE_ACK_COUNT)
    assert notice is not None


def test_eager_stall_restarts_above_everything_seen():
    s = started(0, vA)
    s, _ = pr.on_pre_ack(s, a0, PreAck(n(2, 1)), Q3)  # observes round 2
    s, restart = pr.on_stall(s, 10)
    assert restart == pr.Restart(3)
    assert s.phase is Phase.IDLE and s.active_value is None
    s, msg = pr.start_round(s, restart.round)
    assert msg == PreProposal(n(3, 0))


def test_timed_stall_waits():
    s = started(0, policy=RestartPolicy.timed(25))
    s, restart = pr.on_stall(s, 10)
    assert restart is None and s.stall_deadline == 35
    s, restart = pr.on_stall(s, 34)
    assert restart is None
    s, restart = pr.on_stall(s, 35)
    assert restart is not None


def test_never_policy_stays_stalled():
    s = started(0, policy=RestartPolicy.never())
    for t in (10, 100, 10_000):
        s, restart = pr.on_stall(s, t)
        assert restart is None
    assert s.phase is Phase.PRE_PROPOSING


def test_restart_policy_validation():
    with pytest.raises(ValueError):
        RestartPolicy.timed(0)
    with pytest.raises(ValueError):
        RestartPolicy("sometimes")


def test_restart_abandons_value():
    s = _proposing()
    assert s.active_value == vA
    s, _ = pr.abandon(s)
    s, _ = pr.start_round(s, 2)
    s, _ = pr.on_pre_ack(s, a0, PreAck(n(2, 0), Proposal(n(1, 1), vB)), Q3)
    _, out = pr.on_pre_ack(s, a2, PreAck(n(2, 0)), Q3)
    assert out.proposal.value == vB


def test_distinguished_mode_keeps_the_machine():
    s = pr.distinguished_mode(ProposerState(proposer(0), vA))
    assert s.distinguished
    s, msg = pr.start_round(s, 1)
    assert msg == PreProposal(n(1, 0))


# a proposer never binds one number to two values, and numbers only grow

events = st.lists(st.tuples(st.sampled_from(["pre", "full", "stall"]), st.integers(0, 2),
                            st.integers(1, 5), st.integers(0, 2),
                            st.sampled_from([None, vA, vB])), max_size=60)


@given(events)
def test_binding_and_numbers_are_monotone(seq):
    s = started(0, vC)
    bound, last_number, now = {}, s.current_number, 0
    for kind, who, r, p, v in seq:
        now += 1
        if kind == "stall":
            s, restart = pr.on_stall(s, now)
            if restart is not None:
                s, _ = pr.start_round(s, restart.round)
                assert s.current_number > last_number
                last_number = s.current_number
            continue
        number = s.current_number if p == 0 and r == 1 else n(r, p)
        if kind == "pre":
            attached = Proposal(n(r - 1, 1), v) if v is not None and r > 1 else None
            s, out = pr.on_pre_ack(s, acceptor(who), PreAck(number, attached), Q3)
            if out is not None:
                prop = out.proposal
                assert bound.setdefault(prop.number, prop.value) == prop.value
        else:
            s, _ = pr.on_full_ack(s, acceptor(who), FullAck(number), Q3)

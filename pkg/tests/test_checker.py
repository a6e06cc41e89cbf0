import pytest

from paxoslab import bundled, run
from paxoslab.checker import (
    build_acked_list,
    check_agreement,
    check_induction_list,
    check_lease_uniqueness,
    detect_livelock,
    failover_delays,
    run_checks,
)
from paxoslab.core import (
    FullAck,
    FullProposal,
    LeaseGrant,
    Mutation,
    Proposal,
    ProposalNumber,
    Value,
    acceptor,
    proposer,
)
from paxoslab.fuzz import random_paxos
from paxoslab.scenario import ScenarioConfig, script_duel
from paxoslab.trace import Trace, TraceEvent

vA, vB = Value.of("vA"), Value.of("vB")
HEADER = {"format": "paxoslab-trace", "version": 1,
          "scenario": {"agents": {"acceptors": 3}}}


def n(r, p):
    return ProposalNumber(r, proposer(p))


class Builder:
    def __init__(self):
        self.events = []

    def add(self, kind, **kw):
        self.events.append(TraceEvent(len(self.events), len(self.events), kind, **kw))
        return self

    def decide(self, value):
        return self.add("decision", agent=proposer(0), value=value)

    def propose(self, number, value):
        return self.add("send", src=number.proposer, dst=acceptor(0),
                        msg=FullProposal(Proposal(number, value)))

    def ack(self, number, *acceptors):
        for a in acceptors:
            self.add("send", src=acceptor(a), dst=number.proposer, msg=FullAck(number))
        return self

    def trace(self):
        return Trace(dict(HEADER), self.events)


def test_agreement_examples():
    assert check_agreement(Builder().decide(vA).decide(vA).trace()).passed
    bad = check_agreement(Builder().decide(vA).add("send").decide(vB).trace())
    assert not bad.passed and bad.details["events"] == [0, 2]
    empty = check_agreement(Builder().trace())
    assert empty.passed and "vacuous" in empty.explanation


def test_agreement_is_per_slot():
    t = Builder().add("decision", agent=proposer(0), value=vA, slot=0) \
                 .add("decision", agent=proposer(0), value=vB, slot=1).trace()
    assert check_agreement(t).passed


def test_later_acked_proposal_must_carry_the_winner():
    b = Builder().propose(n(1, 0), vA).ack(n(1, 0), 0, 1)
    b.propose(n(3, 1), vA).ack(n(3, 1), 2)
    v = check_induction_list(b.trace())
    assert v.passed and v.details["entries"] == ["<(1,p0),vA>", "<(3,p1),vA>"]

    b = Builder().propose(n(1, 0), vA).ack(n(1, 0), 0, 1)
    b.propose(n(3, 1), vB).ack(n(3, 1), 2)  # one ack is enough to count
    v = check_induction_list(b.trace())
    assert not v.passed and v.details["offending"] == "<(3,p1),vB>"


def test_single_entry_list():
    v = check_induction_list(Builder().propose(n(1, 0), vA).ack(n(1, 0), 0, 1, 2).trace())
    assert v.passed and len(v.details["entries"]) == 1


def test_no_winner_is_vacuous():
    v = check_induction_list(Builder().propose(n(1, 0), vA).ack(n(1, 0), 0).trace())
    assert v.passed and "vacuous" in v.explanation


def test_lower_numbers_are_outside_the_list():
    b = Builder().propose(n(1, 0), vB).ack(n(1, 0), 0)  # older, never won
    b.propose(n(2, 1), vA).ack(n(2, 1), 1, 2)
    assert check_induction_list(b.trace()).passed


def test_acked_list_starts_at_lowest_winner():
    acks = [(Proposal(n(2, 1), vA), acceptor(a)) for a in (0, 1)]
    acks += [(Proposal(n(4, 0), vA), acceptor(a)) for a in (1, 2)]
    acks += [(Proposal(n(1, 0), vB), acceptor(0))]
    listed = build_acked_list(acks, 2)
    assert listed.first_win.number == n(2, 1)
    assert [p.number for p in listed.entries] == [n(2, 1), n(4, 0)]


def test_number_reused_with_two_values_is_reported():
    b = Builder().propose(n(1, 0), vA).propose(n(1, 0), vB)
    assert not check_induction_list(b.trace()).passed


@pytest.mark.parametrize("mutation,seed", [
    (Mutation.ATTACHMENT_DROP, 0),
    (Mutation.INHERITANCE_DROP, 0),
    (Mutation.ORDERING_DROP, 0),
    (Mutation.STALE_ACK_COUNT, 417),
    (Mutation.HALF_QUORUM, 135),
])
def test_mutants_fail_on_frozen_seeds(mutation, seed):
    trace = run(random_paxos(seed).with_overrides({"proposer.mutation": mutation.value}))
    v = check_induction_list(trace)
    assert not v.passed and v.details["offending"]
    assert check_induction_list(run(random_paxos(seed))).passed


@pytest.mark.parametrize("seed", range(40))
def test_induction_implies_agreement(seed):
    trace = run(random_paxos(seed))
    if check_induction_list(trace).passed:
        assert check_agreement(trace).passed


def test_duel_livelock_report():
    trace = run(script_duel())
    report = detect_livelock(trace, horizon=500)
    assert report.livelock and report.alternating and not report.decided
    assert report.phase1_pattern[:4] == ["p0", "p1", "p0", "p1"]
    assert report.restarts == {"p0": 12, "p1": 11}


def test_failure_free_run_is_not_livelocked():
    report = detect_livelock(run(bundled("distinguished")), horizon=500)
    assert report.decided and not report.livelock


def test_timed_duel_is_not_livelocked():
    report = detect_livelock(run(bundled("timeout-recovery")), horizon=500)
    assert report.decided and not report.livelock


def test_clean_failover_passes_lease_check():
    trace = run(bundled("leader-failover"))
    v = check_lease_uniqueness(trace)
    assert v.passed and v.details["tenures"] >= 2
    assert all(d is not None for _, d in failover_delays(trace))


def test_no_leader_is_vacuous():
    cfg = bundled("leader-failover").with_overrides({
        "faults.drop_probability": 1.0, "faults.leader_crashes": []})
    v = check_lease_uniqueness(run(cfg))
    assert v.passed and "vacuous" in v.explanation


def _stalled_leader_trace():
    base = bundled("leader-failover").with_overrides({"faults.leader_crashes": [],
                                                      "faults.drop_probability": 0.0})
    first = next(e for e in run(base) if e.kind == "state_change"
                 and e.change.get("role") == "leader")
    raw = base.to_dict()
    raw["faults"]["stalls"] = [[str(first.agent), 100, 300]]
    return run(ScenarioConfig.from_dict(raw)), first.agent


def test_stalled_leader_expires_before_successor():
    trace, old = _stalled_leader_trace()
    assert check_lease_uniqueness(trace).passed
    leaders = {e.agent for e in trace if e.kind == "state_change" and e.change.get("role") == "leader"}
    assert len(leaders) >= 2


def test_unexpirable_grants_are_caught():
    trace, old = _stalled_leader_trace()
    for e in trace:  # pretend the old leader's grants never expire
        if isinstance(e.msg, LeaseGrant) and e.msg.candidate == old:
            e.msg = LeaseGrant(e.msg.candidate, e.msg.epoch, None)
    v = check_lease_uniqueness(trace)
    assert not v.passed and str(old) in v.details["agents"]


def test_checks_are_pure():
    trace = run(random_paxos(5))
    first = [r.to_json() for r in run_checks(trace, ["agreement", "induction", "livelock"])]
    again = [r.to_json() for r in run_checks(trace, ["agreement", "induction", "livelock"])]
    assert first == again
    with pytest.raises(ValueError):
        run_checks(trace, ["bogus"])

import pytest

from paxoslab import run
from paxoslab.checker import check_agreement, check_induction_list
from paxoslab.core import Mutation
from paxoslab.oracle import counterexample_scenario, oracle_explore, small_config

MUTANTS = list(Mutation)


def test_faithful_protocol_is_safe_at_small_depth():
    r = oracle_explore(small_config(), depth=8, drops=False)
    assert r.verdict == "pass" and r.explored_depth == 8 and not r.counterexample


@pytest.mark.parametrize("mutation", [None, *MUTANTS])
def test_drop_branches_do_not_change_the_verdict(mutation):
    cfg = small_config(mutation)
    without = oracle_explore(cfg, depth=7, drops=False)
    with_drops = oracle_explore(cfg, depth=7, drops=True)
    assert without.verdict == with_drops.verdict
    assert without.explored_depth == with_drops.explored_depth
    assert without.states <= with_drops.states


def test_half_quorum_is_found_quickly():
    r = oracle_explore(small_config(Mutation.HALF_QUORUM), depth=12, drops=False)
    assert r.verdict == "fail" and r.explored_depth == 7
    assert len(r.counterexample) == 7


@pytest.mark.slow
@pytest.mark.parametrize("mutation", MUTANTS)
def test_every_mutant_is_caught_within_twelve_steps(mutation):
    cfg = small_config(mutation)
    r = oracle_explore(cfg, depth=12, drops=False)
    assert r.verdict == "fail", r.to_json()
    assert r.explored_depth <= 12 and r.violation
    # the shortest counterexample replays through the simulator
    trace = run(counterexample_scenario(cfg, r))
    assert not (check_induction_list(trace).passed and check_agreement(trace).passed)


def test_counterexample_replay_reproduces_the_violation():
    cfg = small_config(Mutation.HALF_QUORUM)
    r = oracle_explore(cfg, depth=12, drops=False)
    scenario = counterexample_scenario(cfg, r)
    assert list(scenario.faults.schedule) == r.counterexample
    trace = run(scenario)
    assert not check_induction_list(trace).passed
    assert run(scenario).dumps() == trace.dumps()


def test_budget_exhaustion_is_partial_not_pass():
    r = oracle_explore(small_config(), depth=12, max_states=500, drops=False)
    assert r.verdict == "partial" and not r.passed
    assert r.explored_depth < 12
    assert r.to_json()["verdict"] == "partial"


def test_violation_at_depth_beyond_bound_is_not_reported():
    r = oracle_explore(small_config(Mutation.HALF_QUORUM), depth=6, drops=False)
    assert r.verdict == "pass"


@pytest.mark.parametrize("kw,msg", [
    (dict(proposers=4), "proposers"),
    (dict(acceptors=7), "acceptors"),
])
def test_instance_size_limits(kw, msg):
    with pytest.raises(ValueError, match=msg):
        oracle_explore(small_config(**kw), depth=2)


def test_three_distinct_values_rejected():
    cfg = small_config(proposers=3).with_overrides({"values": ["a", "b", "c"]})
    with pytest.raises(ValueError, match="distinct values"):
        oracle_explore(cfg, depth=2)


def test_non_paxos_protocol_rejected():
    cfg = small_config().with_overrides({"protocol": "naive", "agents.proposers": 1,
                                         "values": ["vA"]})
    with pytest.raises(ValueError, match="Paxos"):
        oracle_explore(cfg, depth=2)

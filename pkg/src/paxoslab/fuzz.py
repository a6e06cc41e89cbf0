"""Seeded random scenario generators for safety and lease fuzzing."""

from __future__ import annotations

from typing import Any, Dict, Optional

from .scenario import SCHEMA_VERSION, ScenarioConfig
from .simnet import substream


def random_paxos(seed: int, max_events: int = 1500) -> ScenarioConfig:
    """A multi-proposer Paxos run with loss, jitter, crashes and mixed restart policies.

    At most two acceptors crash and a quorum always survives, so runs can
    still decide. Runs continue past the first decision to keep proposers
    competing.
    """
    rng = substream(seed, "fuzz-paxos")
    n_prop = rng.randint(2, 5)
    n_acc = rng.randint(3, 7)
    quorum = n_acc // 2 + 1
    lo = rng.randint(0, 5)
    hi = lo + rng.randint(0, 20)
    crash_count = rng.randint(0, min(2, n_acc - quorum))
    crashed = rng.sample(range(n_acc), crash_count)
    overrides: Dict[str, Any] = {}
    for i in range(n_prop):
        if rng.random() < 0.5:
            overrides[f"p{i}"] = {"restart": "timed", "wait": rng.randint(1, 60)}
    raw = {
        "version": SCHEMA_VERSION,
        "name": f"fuzz-paxos-{seed}",
        "protocol": "paxos_multi",
        "seed": seed,
        "agents": {"proposers": n_prop, "acceptors": n_acc, "learners": 1},
        "values": [f"v{i}" for i in range(n_prop)],
        "faults": {
            "drop_probability": round(rng.uniform(0.0, 0.5), 3),
            "delay": {"uniform": [lo, hi]},
            "crashes": [[f"a{a}", rng.randint(0, 200)] for a in crashed],
        },
        "proposer": {
            "restart": "eager",
            "stall_timeout": rng.randint(5, 40),
            "start_times": [rng.randint(0, 30) for _ in range(n_prop)],
            "overrides": overrides,
            "full_to_promisers_only": rng.random() < 0.25,
        },
        "stop": {"max_events": max_events, "max_virtual_time": 3000, "first_decision": False},
    }
    return ScenarioConfig.from_dict(raw)


def random_leader(seed: int, drop: Optional[float] = None, skew: int = 0,
                  horizon: int = 600) -> ScenarioConfig:
    """Leader election on five agents with one or two leader crashes.

    Two crashes leave exactly a quorum of three alive.
    """
    rng = substream(seed, "fuzz-leader")
    if drop is None:
        drop = round(rng.uniform(0.0, 0.2), 3)
    first = rng.randint(80, 200)
    crashes = [first] if rng.random() < 0.5 else [first, first + rng.randint(150, 250)]
    raw = {
        "version": SCHEMA_VERSION,
        "name": f"fuzz-leader-{seed}",
        "protocol": "leader_election",
        "seed": seed,
        "agents": {"proposers": 0, "acceptors": 5, "learners": 0},
        "faults": {"drop_probability": drop, "delay": {"uniform": [1, 3]},
                   "leader_crashes": crashes, "clock_skew": skew},
        "stop": {"max_events": 50_000, "max_virtual_time": max(horizon, crashes[-1] + 200),
                 "first_decision": False},
    }
    return ScenarioConfig.from_dict(raw)

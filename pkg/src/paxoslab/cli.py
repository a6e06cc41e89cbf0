"""Command line front end: run, check, sweep, replay, explore, scenarios.

Exit codes: 0 success, 1 a check failed or an expectation was not met,
2 usage, configuration or trace format error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

from . import checker, oracle, simnet
from .core import Mutation
from .scenario import BUNDLED, ConfigError, ScenarioConfig, apply_overrides, bundled
from .trace import Trace, TraceFormatError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parse_scalar(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_sets(items: Sequence[str]) -> Dict[str, Any]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        out[key] = _parse_scalar(value)
    return out


def load_config(source: str, seed: Optional[int] = None,
                sets: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    """Read a scenario file, or a bundled scenario by name when no such file exists."""
    if os.path.exists(source):
        try:
            with open(source, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{source}: invalid JSON at line {exc.lineno}: {exc.msg}"])
        except OSError as exc:
            raise ConfigError([f"{source}: {exc.strerror}"])
    elif source in BUNDLED:
        raw = bundled(source).to_dict()
    else:
        raise ConfigError([f"{source}: no such file or bundled scenario "
                           f"({', '.join(BUNDLED)})"])
    overrides = dict(sets or {})
    if seed is not None:
        overrides["seed"] = seed
    if overrides:
        if not isinstance(raw, dict):
            raise ConfigError(["scenario must be a JSON object"])
        raw = apply_overrides(raw, overrides)
    return ScenarioConfig.from_dict(raw)


def _print_summary(cfg: ScenarioConfig, summary: simnet.RunSummary, out) -> None:
    print(f"scenario      {cfg.name or '-'} ({cfg.protocol}, seed {cfg.seed})", file=out)
    print(f"stop          {summary.stop_reason}", file=out)
    print(f"decisions     {len(summary.decisions)}", file=out)
    for t, who, value in summary.decisions:
        print(f"  t={t} {who} value={bytes.fromhex(value).decode('utf-8', 'replace')}", file=out)
    if summary.restarts:
        total = sum(summary.restarts.values())
        per = ", ".join(f"{k}={v}" for k, v in sorted(summary.restarts.items()))
        print(f"restarts      {total} ({per})", file=out)
    if cfg.protocol == "naive":
        print(f"resends       {summary.resends}", file=out)
    msgs = ", ".join(f"{k}={v}" for k, v in summary.messages.items())
    print(f"messages      {summary.sends} sent, {summary.deliveries} delivered, "
          f"{summary.drops} dropped ({msgs})", file=out)
    print(f"virtual time  {summary.duration}", file=out)


# -- commands -------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.seed, _parse_sets(args.set))
    trace, summary = simnet.run_with_summary(cfg)
    if args.out:
        trace.write(args.out)
    _print_summary(cfg, summary, sys.stdout)
    if args.out:
        print(f"trace         {args.out} ({len(trace)} events)")
    return EXIT_OK


def _read_trace(path: str) -> Tuple[Trace, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise TraceFormatError(f"{path}: {exc.strerror}")
    return Trace.loads(text), text


def cmd_check(args) -> int:
    trace, _ = _read_trace(args.trace)
    names = [c.strip() for c in args.checks.split(",") if c.strip()]
    if not names:
        raise UsageError("--checks is empty")
    unknown = [c for c in names if c not in checker.CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s) {', '.join(unknown)}; "
                         f"choose from {', '.join(checker.CHECKS)}")
    failed = False
    for result in checker.run_checks(trace, names, args.horizon):
        if isinstance(result, checker.LivelockReport):
            # livelock is reported either way; it only fails the run on request
            ok = not args.expect_progress or result.decided
            name = "livelock"
        else:
            ok, name = result.passed, result.check
        failed |= not ok
        if args.json:
            print(json.dumps(result.to_json(), sort_keys=True))
        else:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {result.explanation}")
            if isinstance(result, checker.LivelockReport) and result.phase1_pattern:
                print(f"     phase-1 completions: {' '.join(result.phase1_pattern)}")
            entries = getattr(result, "details", {}).get("entries")
            if name == "induction" and entries and not ok:
                print(f"     acked list: {' '.join(entries)}")
    return EXIT_FAIL if failed else EXIT_OK


SWEEP_COLUMNS = ("runs", "failed", "decided", "decision_rate", "mean_time_to_decision",
                 "mean_restarts", "mean_resends", "mean_messages")


def _sweep_cell(job) -> Dict[str, Any]:
    source, sets, point, seeds = job
    row: Dict[str, Any] = dict(point)
    times, restarts, resends, messages, failed = [], [], [], [], 0
    errors = []
    for seed in seeds:
        try:
            cfg = load_config(source, seed, {**sets, **point})
            _, summary = simnet.run_with_summary(cfg)
        except (ConfigError, simnet.ScheduleError) as exc:
            failed += 1
            errors.append(str(exc).splitlines()[-1].strip())
            continue
        if summary.decided:
            times.append(summary.first_decision_time)
        restarts.append(sum(summary.restarts.values()))
        resends.append(summary.resends)
        messages.append(summary.sends)
    ran = len(seeds) - failed

    def mean(xs):
        return round(statistics.fmean(xs), 3) if xs else ""

    row.update(runs=ran, failed=failed, decided=len(times),
               decision_rate=round(len(times) / ran, 4) if ran else "",
               mean_time_to_decision=mean(times), mean_restarts=mean(restarts),
               mean_resends=mean(resends), mean_messages=mean(messages))
    row["_errors"] = sorted(set(errors))
    return row


def parse_grid(items: Sequence[str]) -> Dict[str, List[Any]]:
    grid: Dict[str, List[Any]] = {}
    for item in items or ():
        key, sep, values = item.partition("=")
        if not sep or not key or not values:
            raise UsageError(f"--grid expects KEY=V1,V2,..., got {item!r}")
        grid[key] = [_parse_scalar(v) for v in values.split(",")]
    if not grid:
        raise UsageError("empty grid: give at least one --grid KEY=V1,V2,...")
    return grid


def sweep(source: str, grid: Dict[str, List[Any]], seeds_per_cell: int,
          sets: Optional[Dict[str, Any]] = None, base_seed: int = 0,
          jobs: int = 1) -> List[Dict[str, Any]]:
    """Run every grid point with seeds ``base_seed .. base_seed + seeds_per_cell - 1``."""
    keys = list(grid)
    seeds = list(range(base_seed, base_seed + seeds_per_cell))
    cells = [(source, dict(sets or {}), dict(zip(keys, combo)), seeds)
             for combo in itertools.product(*(grid[k] for k in keys))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_cell, cells))
    return [_sweep_cell(c) for c in cells]


def cmd_sweep(args) -> int:
    grid = parse_grid(args.grid)
    if args.seeds_per_cell < 1:
        raise UsageError("--seeds-per-cell must be positive")
    sets = _parse_sets(args.set)
    load_config(args.config, None, sets)  # fail fast on a broken base config
    rows = sweep(args.config, grid, args.seeds_per_cell, sets, args.base_seed, args.jobs)
    columns = list(grid) + list(SWEEP_COLUMNS)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, columns, delimiter=args.delimiter, extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    finally:
        if args.out:
            out.close()
    bad = [r for r in rows if r["failed"]]
    for r in bad:
        point = ", ".join(f"{k}={r[k]}" for k in grid)
        print(f"cell {point}: {r['failed']} run(s) failed: {'; '.join(r['_errors'])}",
              file=sys.stderr)
    return EXIT_USAGE if bad else EXIT_OK


def cmd_replay(args) -> int:
    trace, text = _read_trace(args.trace)
    if "scenario" not in trace.header:
        raise TraceFormatError("trace header has no embedded scenario", 1)
    cfg = ScenarioConfig.from_dict(trace.header["scenario"])
    again = simnet.run(cfg).dumps()
    if again == text:
        print(f"identical: {len(trace)} events re-executed byte for byte")
        return EXIT_OK
    old, new = text.splitlines(), again.splitlines()
    for n, (a, b) in enumerate(itertools.zip_longest(old, new), start=1):
        if a != b:
            print(f"divergence at line {n}:")
            print(f"  recorded: {a if a is not None else '<end of trace>'}")
            print(f"  replayed: {b if b is not None else '<end of trace>'}")
            break
    return EXIT_FAIL


def cmd_explore(args) -> int:
    if args.config:
        cfg = load_config(args.config, None, _parse_sets(args.set))
    else:
        cfg = oracle.small_config(None if args.mutation is None else
                                  Mutation(args.mutation))
    result = oracle.oracle_explore(cfg, depth=args.depth, max_states=args.max_states,
                                   max_restarts=args.max_restarts, drops=args.drops)
    if args.json:
        print(json.dumps(result.to_json(), sort_keys=True))
    else:
        print(f"verdict     {result.verdict}")
        print(f"depth       {result.explored_depth} of {result.depth} fully explored")
        print(f"states      {result.states} in {result.seconds:.1f}s")
        if result.violation:
            print(f"violation   {result.violation}")
            for k, step in enumerate(result.counterexample, start=1):
                if step["op"] == "restart":
                    print(f"  {k:2d}. restart {step['agent']}")
                else:
                    print(f"  {k:2d}. {step['op']} {step['src']}->{step['dst']} "
                          f"{json.dumps(step['msg'], sort_keys=True)}")
        if result.verdict == "partial":
            print("state budget exhausted; the bound was NOT fully checked")
    if args.out and result.counterexample:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(oracle.counterexample_scenario(cfg, result).to_json())
        print(f"counterexample scenario written to {args.out}")
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_scenarios(args) -> int:
    if args.name:
        if args.name not in BUNDLED:
            raise ConfigError([f"{args.name}: no bundled scenario ({', '.join(BUNDLED)})"])
        print(bundled(args.name).to_json(), end="")
        return EXIT_OK
    for name in BUNDLED:
        cfg = bundled(name)
        print(f"{name:18s} {cfg.protocol}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="paxoslab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def config_args(p, required=True):
        p.add_argument("--config", required=required, metavar="PATH",
                       help="scenario JSON file or bundled scenario name")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field by dotted path, e.g. faults.drop_probability=0.2")

    p = sub.add_parser("run", help="simulate one scenario and write its trace")
    config_args(p)
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", metavar="PATH", help="trace output file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="run trace checkers")
    p.add_argument("trace")
    p.add_argument("--checks", default="agreement,induction",
                   help=f"comma-separated subset of {','.join(checker.CHECKS)}")
    p.add_argument("--horizon", type=int, default=500, help="livelock horizon in events")
    p.add_argument("--expect-progress", action="store_true",
                   help="fail the livelock check when nothing is decided within the horizon")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sweep", help="run a parameter grid and print a results table")
    config_args(p)
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2,...")
    p.add_argument("--seeds-per-cell", type=int, default=200)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="cells simulated in parallel")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="re-execute a trace and compare byte for byte")
    p.add_argument("trace")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("explore", help="exhaustively search small Paxos instances")
    config_args(p, required=False)
    p.add_argument("--mutation", choices=[m.value for m in Mutation],
                   help="protocol mutant for the built-in 2x3 instance")
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--max-states", type=int, default=5_000_000)
    p.add_argument("--max-restarts", type=int, default=1)
    p.add_argument("--drops", action="store_true", help="also branch on message drops")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", metavar="PATH", help="write the counterexample as a scenario")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("scenarios", help="list bundled scenarios or print one")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_scenarios)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return EXIT_USAGE
    except TraceFormatError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, simnet.ScheduleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

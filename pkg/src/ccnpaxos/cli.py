"""Command line front end: run scenarios, check traces, sweep seeds.

Exit codes: 0 clean, 2 configuration or unreadable input, 3 livelock
guard tripped, 4 invariant violation found.

`--scenario` accepts a file path or the bare name of a bundled scenario.
Traces land in the directory named by CCNPAXOS_TRACE_DIR (default: the
working directory) unless `--trace` gives an explicit path.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import GroupError, LivelockGuard, ScenarioError, TraceError
from .netsim import trace_to_jsonl
from .scenario import (
    MODE_NAMES,
    bundled_names,
    bundled_path,
    load_scenario,
    run_scenario,
    with_overrides,
)
from .tracecheck import check_file, check_trace

__all__ = ["main"]


def _load(spec: str):
    p = Path(spec)
    if p.exists():
        return load_scenario(p)
    if "/" not in spec and "." not in spec:
        return load_scenario(bundled_path(spec))
    raise ScenarioError(f"cannot read {spec}: no such file")


def _trace_path(arg, scenario) -> Path:
    if arg:
        return Path(arg)
    base = Path(os.environ.get("CCNPAXOS_TRACE_DIR", "."))
    return base / f"{scenario.name}-seed{scenario.network.seed}.jsonl"


def _print_summary(summary: dict, trace_path) -> None:
    print(
        f"scenario {summary['scenario']!r} ({summary['mode']}, seed {summary['seed']}): "
        f"master={summary['master'] or '-'}, {summary['chosen_slots']} value(s) chosen, "
        f"{summary['events']} trace events"
    )
    msgs = " ".join(f"{k}={v}" for k, v in sorted(summary["messages"].items()))
    print(f"messages: {msgs or '-'}")
    if summary["dropped_actions"]:
        print(f"dropped actions: {summary['dropped_actions']}")
    for node in summary["nodes"]:
        tag = f"node {node['id']} grpver={node['grpver']}"
        if node["master"]:
            tag += " master"
        if not node["logs"]:
            print(f"{tag}: -")
            continue
        for var, log in sorted(node["logs"].items()):
            entries = " ".join(
                f"{it}={e['kind']}:{e['digest'][:8]}" for it, e in sorted(log.items())
            )
            print(f"{tag} [{var}]: {entries or '-'}")
    if trace_path is not None:
        print(f"trace: {trace_path}")


def cmd_run(args) -> int:
    scenario = with_overrides(
        _load(args.scenario), mode=args.mode, seed=args.seed, loss=args.loss
    )
    result = run_scenario(scenario)
    path = _trace_path(args.trace, scenario)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(trace_to_jsonl(result.trace)) + "\n", encoding="utf-8")
    _print_summary(result.summary, path)
    return 0


def cmd_check(args) -> int:
    violations = check_file(args.trace)
    if not violations:
        print(f"ok: {args.trace}: no violations")
        return 0
    print(f"FAIL: {args.trace}: {len(violations)} violation(s)")
    print(f"first: {violations[0]}")
    return 4


def _parse_seeds(spec: str) -> range:
    try:
        if ":" in spec:
            lo, hi = spec.split(":", 1)
            return range(int(lo), int(hi))
        return range(int(spec))
    except ValueError:
        raise ScenarioError(f"seeds must be COUNT or START:END, got {spec!r}") from None


def cmd_sweep(args) -> int:
    scenario = _load(args.scenario)
    seeds = _parse_seeds(args.seeds)
    losses = args.loss if args.loss else [scenario.network.loss_prob]
    rows = []
    total_violations = 0
    for loss in losses:
        runs = masters = chosen = messages = violations = dropped = 0
        for seed in seeds:
            s = with_overrides(scenario, mode=args.mode, seed=seed, loss=loss)
            result = run_scenario(s)
            runs += 1
            if result.summary["master"] is not None:
                masters += 1
            chosen += result.summary["chosen_slots"]
            messages += sum(result.summary["messages"].values())
            dropped += result.summary["dropped_actions"]
            violations += len(check_trace(result.trace))
        if runs == 0:
            continue
        rows.append(
            {
                "loss": loss,
                "runs": runs,
                "elections_won": masters,
                "chosen_slots": chosen,
                "messages": messages,
                "mean_messages_per_chosen": round(messages / chosen, 3) if chosen else None,
                "dropped_actions": dropped,
                "violations": violations,
            }
        )
        total_violations += violations
    mode = args.mode or MODE_NAMES[scenario.mode]
    report = {
        "scenario": scenario.name,
        "mode": mode,
        "seeds": [seeds.start, seeds.stop],
        "rows": rows,
        "violations": total_violations,
    }
    header = f"{'loss':>6} {'runs':>6} {'masters':>8} {'chosen':>7} {'messages':>9} {'msg/chosen':>11} {'dropped':>8} {'violations':>11}"
    print(f"sweep of {scenario.name!r} ({mode}), seeds {seeds.start}..{seeds.stop - 1 if len(seeds) else seeds.start}")
    print(header)
    for r in rows:
        mpc = "-" if r["mean_messages_per_chosen"] is None else f"{r['mean_messages_per_chosen']:.2f}"
        print(
            f"{r['loss']:>6.2f} {r['runs']:>6} {r['elections_won']:>8} {r['chosen_slots']:>7} "
            f"{r['messages']:>9} {mpc:>11} {r['dropped_actions']:>8} {r['violations']:>11}"
        )
    if args.report:
        out = Path(args.report)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        print(f"report: {out}")
    else:
        print(json.dumps(report))
    return 4 if total_violations else 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ccnpaxos",
        description="Run named-data consensus scenarios, check traces, sweep seeds.",
        epilog=f"bundled scenarios: {', '.join(bundled_names())}",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="execute one scenario and write its trace")
    run.add_argument("--scenario", required=True, help="scenario file or bundled name")
    run.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    run.add_argument("--trace", default=None, help="trace output path")
    run.add_argument("--mode", choices=sorted(MODE_NAMES.values()), default=None,
                     help="override the signaling mode")
    run.add_argument("--loss", type=float, default=None, help="override loss probability")
    run.set_defaults(fn=cmd_run)

    chk = sub.add_parser("check", help="verify invariants over a recorded trace")
    chk.add_argument("--trace", required=True, help="JSON-lines trace to verify")
    chk.set_defaults(fn=cmd_check)

    sw = sub.add_parser("sweep", help="run a seed sweep and report aggregates")
    sw.add_argument("--scenario", required=True, help="scenario file or bundled name")
    sw.add_argument("--seeds", default="20", help="COUNT or START:END (half-open)")
    sw.add_argument("--loss", type=float, action="append", default=None,
                    help="loss probability; repeat for several levels")
    sw.add_argument("--mode", choices=sorted(MODE_NAMES.values()), default=None,
                    help="override the signaling mode")
    sw.add_argument("--report", default=None, help="write the JSON report to this path")
    sw.set_defaults(fn=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioError, TraceError, GroupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LivelockGuard as exc:
        print(f"livelock guard tripped: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

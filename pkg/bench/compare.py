"""Compare the compiled extension modules against the pure-Python sources.

Run with no arguments to print a side-by-side table:

    python3 bench/compare.py [--scale N] [--json PATH]

Each backend is measured in its own subprocess.  The pure worker installs
an import hook that resolves this package's modules from their .py sources
even when compiled extensions are present, plus CCNPAXOS_PURE=1 for the
search kernel.  Both workers also hash one simulated run so the parent can
verify the two backends produce byte-identical traces, not just similar
speed-shaped output.

Workloads: name codec round-trips, payload codec round-trips, full
simulated consensus runs, and the exhaustive model search.
"""

import argparse
import hashlib
import importlib.machinery
import importlib.util
import json
import os
import subprocess
import sys
import time


# -- worker side ---------------------------------------------------------


def _force_pure_imports():
    """Make ccnpaxos submodule imports resolve .py files, never .so."""
    os.environ["CCNPAXOS_PURE"] = "1"
    spec = importlib.util.find_spec("ccnpaxos")
    roots = set()
    for d in spec.submodule_search_locations or ():
        roots.add(d)
        roots.add(os.path.join(d, "_kernel"))

    def hook(path):
        if path in roots:
            return importlib.machinery.FileFinder(
                path,
                (importlib.machinery.SourceFileLoader,
                 importlib.machinery.SOURCE_SUFFIXES),
            )
        raise ImportError(path)

    sys.path_hooks.insert(0, hook)
    sys.path_importer_cache.clear()


def _module_kind(mod):
    return "so" if mod.__file__.endswith(".so") else "py"


def _bench_names(scale):
    from ccnpaxos.naming import (
        ACCEPT, GROUP, INDIVIDUAL, LEARN, PREPARE, READ,
        BallotNumber, ConsensusName, encode_name, parse_name,
    )

    names = []
    for i in range(500):
        if i % 4 == 3:
            ind = ConsensusName(
                scheme=INDIVIDUAL, prefix=("site", f"n{i % 11}"), grp="g",
                prg="kv", var=f"v{i % 13}", verb=READ,
            )
        else:
            ind = ConsensusName(
                scheme=INDIVIDUAL, prefix=("site", f"n{i % 11}"), grp="g",
                prg="kv", var=f"v{i % 13}",
                verb=(PREPARE, ACCEPT, LEARN)[i % 4],
                ballot=BallotNumber(i, f"p{i % 7}"),
                iter=i if i % 2 else None,
            )
        names.append(ind)
        names.append(ConsensusName(
            scheme=GROUP, grpver=i % 5, grp="g", prg="kv", var=f"v{i % 13}",
            verb=(PREPARE, ACCEPT, LEARN)[i % 3],
            ballot=BallotNumber(i, f"p{i % 7}", priority=i % 3),
            iter=i,
        ))
    passes = 20 * scale
    t0 = time.perf_counter()
    for _ in range(passes):
        for n in names:
            parse_name(encode_name(n), n.scheme)
    return {"ops": passes * len(names), "secs": time.perf_counter() - t0}


def _bench_payloads(scale):
    from ccnpaxos.naming import BallotNumber
    from ccnpaxos.wire import Entry, Learn, Value, decode_payload, encode_payload

    entries = tuple(
        Entry(BallotNumber(3, "p0"), it, v)
        for it, v in enumerate((
            Value.link("/p0/descriptor"), Value.opaque(b"alpha"),
            Value.noop(), Value.opaque(b"beta" * 8),
        ))
    )
    payload = Learn(entries, 1, response_target="/a0")
    ops = 20_000 * scale
    t0 = time.perf_counter()
    for _ in range(ops):
        decode_payload(encode_payload(payload))
    return {"ops": ops, "secs": time.perf_counter() - t0}


def _bench_simulation(scale):
    from ccnpaxos.netsim import trace_to_jsonl
    from ccnpaxos.scenario import load_bundled, run_scenario, with_overrides

    base = load_bundled("contention")
    digest = hashlib.sha256()
    events = 0
    t0 = time.perf_counter()
    for seed in range(5 * scale):
        result = run_scenario(with_overrides(base, seed=seed, loss=0.3))
        events += len(result.trace)
        if seed == 0:
            blob = "\n".join(trace_to_jsonl(result.trace)).encode()
            digest.update(blob)
    return {
        "ops": events,
        "secs": time.perf_counter() - t0,
        "checksum": digest.hexdigest()[:16],
    }


def _bench_search(_scale):
    from ccnpaxos.modelcheck import HIGHEST, enumerate_model

    t0 = time.perf_counter()
    result = enumerate_model(HIGHEST, 8)
    return {"ops": result.states, "secs": time.perf_counter() - t0,
            "checksum": f"{result.states}:{result.violations}"}


def _best_of(fn, scale, repeats):
    best = None
    for _ in range(repeats):
        sample = fn(scale)
        if best is None or sample["secs"] < best["secs"]:
            best = sample
    return best


def run_worker(backend, scale):
    if backend == "pure":
        _force_pure_imports()
    else:
        os.environ.pop("CCNPAXOS_PURE", None)

    import ccnpaxos.group  # noqa: F401
    import ccnpaxos.naming  # noqa: F401
    import ccnpaxos.netsim  # noqa: F401
    import ccnpaxos.node  # noqa: F401
    import ccnpaxos.paxos  # noqa: F401
    import ccnpaxos.wire  # noqa: F401
    from ccnpaxos.modelcheck import backend_name

    modules = {
        short: _module_kind(sys.modules[f"ccnpaxos.{short}"])
        for short in ("naming", "wire", "paxos", "group", "netsim", "node")
    }
    modules["search"] = backend_name()

    workloads = {
        "name codec": _best_of(_bench_names, scale, 3),
        "payload codec": _best_of(_bench_payloads, scale, 3),
        "simulated protocol": _best_of(_bench_simulation, scale, 2),
        "model search": _best_of(_bench_search, scale, 1),
    }
    checksums = {k: w.pop("checksum") for k, w in workloads.items() if "checksum" in w}
    print(json.dumps({
        "backend": backend,
        "modules": modules,
        "workloads": workloads,
        "checksums": checksums,
    }))


# -- parent side ---------------------------------------------------------


def _rate(ops, secs):
    per = ops / secs if secs else float("inf")
    if per >= 1e6:
        return f"{per / 1e6:.1f}M/s"
    if per >= 1e3:
        return f"{per / 1e3:.0f}k/s"
    return f"{per:.0f}/s"


def compare(scale, json_path):
    here = os.path.abspath(__file__)
    reports = {}
    for backend in ("compiled", "pure"):
        env = dict(os.environ)
        env.pop("CCNPAXOS_PURE", None)
        proc = subprocess.run(
            [sys.executable, here, "--worker", backend, "--scale", str(scale)],
            capture_output=True, text=True, env=env,
        )
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            return 1
        reports[backend] = json.loads(proc.stdout)

    for backend, report in reports.items():
        kinds = report["modules"]
        sys.stdout.write(f"{backend:>8}: " + "  ".join(
            f"{m}={k}" for m, k in sorted(kinds.items())) + "\n")
    if all(k in ("py", "pure") for k in reports["compiled"]["modules"].values()):
        print("note: no compiled extensions found, comparing pure against pure")

    consistent = reports["compiled"]["checksums"] == reports["pure"]["checksums"]
    print(f"outputs identical across backends: {'yes' if consistent else 'NO'}")

    header = f"{'workload':<20}{'ops':>10}  {'compiled':>17}  {'pure':>17}  {'speedup':>8}"
    print()
    print(header)
    print("-" * len(header))
    for name in reports["compiled"]["workloads"]:
        c = reports["compiled"]["workloads"][name]
        p = reports["pure"]["workloads"][name]
        speed = p["secs"] / c["secs"] if c["secs"] else float("inf")
        print(
            f"{name:<20}{c['ops']:>10}  "
            f"{c['secs']:>7.2f}s {_rate(c['ops'], c['secs']):>8}  "
            f"{p['secs']:>7.2f}s {_rate(p['ops'], p['secs']):>8}  "
            f"{speed:>7.1f}x"
        )

    if json_path:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump({"backends": reports, "consistent": consistent}, fh, indent=2)
        print(f"\nreport: {json_path}")
    return 0 if consistent else 1


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scale", type=int, default=1,
                        help="multiply workload sizes (default 1)")
    parser.add_argument("--json", metavar="PATH", help="also write a JSON report")
    parser.add_argument("--worker", choices=("compiled", "pure"),
                        help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.worker:
        run_worker(args.worker, args.scale)
        return 0
    return compare(args.scale, args.json)


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance gate: nine release criteria, one test and one verdict line each.

Run with -v to get the per-criterion pass/fail lines; each test also
prints a one-line report with the measured numbers.  Tolerances and
budgets are pinned as constants below, next to the criterion they bound.
"""

import dataclasses
import random
import time

import pytest

from ccnpaxos.errors import NamingError
from ccnpaxos.modelcheck import counterexample, value_rule_audit
from ccnpaxos.naming import (
    ACCEPT,
    GROUP,
    INDIVIDUAL,
    LEARN,
    PREPARE,
    READ,
    BallotNumber,
    ConsensusName,
    encode_name,
    parse_name,
)
from ccnpaxos.netsim import trace_to_jsonl
from ccnpaxos.scenario import (
    bundled_names,
    load_bundled,
    run_scenario,
    scenario_from_dict,
    with_overrides,
)
from ccnpaxos.tracecheck import check_trace
from ccnpaxos.wire import Nack, ReadResp, Value

# criterion 1: at least 1000 runs across the full (mode x loss) matrix, all clean
SWEEP_SEEDS = 167
SWEEP_LOSSES = (0.0, 0.1, 0.3)
SWEEP_MODES = ("individual", "multicast")
SWEEP_BUDGET_S = 60.0

# criterion 2
MODEL_BUDGET_S = 30.0
MODEL_MIN_STATES = 100_000  # enumeration must be big enough to mean something

# criterion 3
EQUIV_SEEDS = 100

# criterion 5: cache ages measured at the forwarder, in ms
CACHE_MAX_AGE = 5
CACHE_HIT_AGE = 3
CACHE_MISS_AGE = 7

# criterion 6: majority of the four-member group
RECONFIG_QUORUM = 3

# criterion 8
DETERMINISM_SEED = 11

# criterion 9
FUZZ_VALID = 100_000
FUZZ_MUTANTS = 100_000


def test_criterion_1_safety_sweep():
    base = load_bundled("contention")
    t0 = time.perf_counter()
    runs = violations = 0
    for mode in SWEEP_MODES:
        for loss in SWEEP_LOSSES:
            for seed in range(SWEEP_SEEDS):
                s = with_overrides(base, mode=mode, seed=seed, loss=loss)
                violations += len(check_trace(run_scenario(s).trace))
                runs += 1
    dt = time.perf_counter() - t0
    assert runs >= 1000
    assert violations == 0
    assert dt < SWEEP_BUDGET_S
    print(f"criterion 1 safety sweep: PASS ({runs} runs, {violations} violations, {dt:.1f}s < {SWEEP_BUDGET_S:.0f}s)")


def test_criterion_2_exhaustive_small_model():
    t0 = time.perf_counter()
    audit = value_rule_audit()
    witness = counterexample()
    dt = time.perf_counter() - t0
    assert audit["highest"].violations == 0
    assert audit["highest"].states >= MODEL_MIN_STATES
    assert audit["lowest"].violations >= 1
    assert witness["lowest_violates"] and not witness["highest_violates"]
    assert dt < MODEL_BUDGET_S
    print(
        f"criterion 2 exhaustive model: PASS ({audit['highest'].states} states clean under "
        f"highest-ballot rule, lowest-ballot rule violates, {dt:.1f}s < {MODEL_BUDGET_S:.0f}s)"
    )


def _equivalence_dict(seed):
    return {
        "name": "equiv",
        "network": {"seed": seed, "delay_ms": [1, 5]},
        "nodes": [
            {"id": "p0", "prefix": "/p0", "roles": ["proposer"]},
            {"id": "a0", "prefix": "/a0", "roles": ["acceptor", "learner"]},
            {"id": "a1", "prefix": "/a1", "roles": ["acceptor", "learner"]},
            {"id": "a2", "prefix": "/a2", "roles": ["acceptor", "learner"]},
        ],
        "group": {"members": ["a0", "a1", "a2"]},
        "workload": [
            {"t": 5, "action": "elect", "node": "p0"},
            {"t": 400, "action": "propose", "node": "p0", "value": "alpha"},
            {"t": 500, "action": "propose", "node": "p0", "value": "beta"},
            {"t": 600, "action": "skip_slot", "node": "p0"},
            {"t": 700, "action": "propose", "node": "p0", "value": "gamma"},
            {"t": 900, "action": "fill_noops", "node": "p0", "up_to_iter": 5},
        ],
    }


def test_criterion_3_mode_equivalence():
    for seed in range(EQUIV_SEEDS):
        base = scenario_from_dict(_equivalence_dict(seed))
        logs = {}
        for mode in ("individual", "multicast"):
            result = run_scenario(with_overrides(base, mode=mode))
            logs[mode] = {
                nid: result.servers[nid].snapshot()["logs"] for nid in result.servers
            }
        assert logs["individual"] == logs["multicast"], f"mode logs diverge at seed {seed}"
        one = logs["individual"]
        assert all(one[nid] == one["p0"] for nid in one), f"nodes diverge at seed {seed}"
        assert set(one["p0"]["master"]) == {0, 1, 2, 3, 4}
    print(f"criterion 3 mode equivalence: PASS (identical logs on every node, {EQUIV_SEEDS} seeds)")


def test_criterion_4_figure_reproduction():
    fig1 = run_scenario(load_bundled("fig1")).trace
    rounds = [l for l in fig1 if l[1] == "round_started"]
    assert len(rounds) == 1
    prepares = [l for l in fig1 if l[1] == "interest" and l[2] == "p0" and "/prepare/" in l[4]]
    returns = [
        l for l in fig1
        if l[1] == "content_object" and l[2] == "fwd0" and l[3] == "p0" and "/prepare/" in l[4]
    ]
    assert len(prepares) == 3 and len({l[4] for l in prepares}) == 3
    assert len(returns) == 3

    fig2 = run_scenario(load_bundled("fig2")).trace
    assert len([l for l in fig2 if l[1] == "round_started"]) == 1
    group_out = [l for l in fig2 if l[1] == "push" and l[2] == "p0" and "/prepare/" in l[4]]
    responses = [
        l for l in fig2 if l[1] == "push" and l[2] in ("a0", "a1", "a2") and "/prepare/" in l[4]
    ]
    assert len(group_out) == 1 and group_out[0][4].startswith("/g/v0/")
    assert len(responses) == 3 and {l[2] for l in responses} == {"a0", "a1", "a2"}
    print(
        "criterion 4 figure reproduction: PASS "
        "(fig1: 3 prepare Interests + 3 reverse-path ContentObjects; "
        "fig2: 1 group Push + 3 unicast Push responses)"
    )


def test_criterion_5_cache_semantics():
    warm = run_scenario(load_bundled("cache"))
    hits = [l for l in warm.trace if l[1] == "content_object" and l[6] and l[6].get("cache_hit")]
    assert len(hits) == 1
    t, _, frm, to, name, _, extra = hits[0]
    assert frm == "fwd0" and to == "a1" and name.endswith("/read")
    assert extra["max_age_ms"] == CACHE_MAX_AGE
    assert t - extra["stored_at"] == CACHE_HIT_AGE
    # the third ask arrived past MaxAge, missed, and was re-forwarded upstream
    upstream = [
        l for l in warm.trace
        if l[1] == "interest" and l[2] == "fwd0" and l[3] == "p0" and l[4].endswith("/read")
    ]
    assert len(upstream) == 2
    assert upstream[1][0] - hits[0][6]["stored_at"] == CACHE_MISS_AGE
    assert len([l for l in warm.trace if l[1] == "read_result"]) == 3

    cold_scenario = load_bundled("cache")
    cold_scenario = dataclasses.replace(
        cold_scenario,
        network=dataclasses.replace(cold_scenario.network, default_max_age_ms=0),
    )
    cold = run_scenario(cold_scenario)
    assert not any(l[6] and l[6].get("cache_hit") for l in cold.trace if l[1] == "content_object")
    # with caching off every ask crosses to the producer and back
    cold_up = [
        l for l in cold.trace
        if l[1] == "interest" and l[2] == "fwd0" and l[3] == "p0" and l[4].endswith("/read")
    ]
    cold_back = [
        l for l in cold.trace
        if l[1] == "content_object" and l[2] == "p0" and l[3] == "fwd0" and l[4].endswith("/read")
    ]
    assert len(cold_up) == 3 and len(cold_back) == 3
    print(
        f"criterion 5 cache semantics: PASS (MaxAge {CACHE_MAX_AGE}ms: hit at age "
        f"{CACHE_HIT_AGE}ms, miss at age {CACHE_MISS_AGE}ms; MaxAge 0: zero cache hits)"
    )


def test_criterion_6_reconfiguration():
    result = run_scenario(load_bundled("reconfig"))
    chosen = [l for l in result.trace if l[1] == "chosen"]
    post = [l for l in chosen if l[5] == Value.opaque(b"post").digest()]
    assert len(post) == 1
    assert post[0][6]["grpver"] == 1
    assert post[0][6]["acks"] == RECONFIG_QUORUM
    new_cfg_rounds = [l for l in chosen if l[6]["grpver"] == 1]
    assert new_cfg_rounds and all(l[6]["acks"] >= RECONFIG_QUORUM for l in new_cfg_rounds)
    assert all(s.group.grpver == 1 for s in result.servers.values())
    assert Value.opaque(b"post") in result.servers["a3"].merged_log().values()
    print(
        f"criterion 6 reconfiguration: PASS (grpver 1 rounds need {RECONFIG_QUORUM} acks "
        "of 4 members; the added acceptor holds the post-change value)"
    )


def test_criterion_7_read_semantics():
    result = run_scenario(load_bundled("noop-fill"))
    by_iter = dict(result.servers["a1"].read_results)
    assert isinstance(by_iter[9], Nack)
    gap = by_iter[2]
    assert isinstance(gap, ReadResp) and len(gap.found) == 1
    assert gap.found[0].iter == 2 and gap.found[0].value.is_noop
    settled = by_iter[3]
    assert isinstance(settled, ReadResp) and len(settled.found) == 1
    entry = settled.found[0]
    assert (entry.iter, entry.value) == (3, Value.opaque(b"after"))
    assert entry.ballot == result.servers["p0"].current_ballot()
    everything = by_iter[None]
    assert [e.iter for e in everything.found] == [0, 1, 2, 3]
    assert [e.value.kind for e in everything.found] == ["link", "opaque", "noop", "opaque"]
    print(
        "criterion 7 read semantics: PASS (never-proposed iter -> Nack, gap-filled iter -> "
        "NoOp, chosen iter -> (N, iter, V) tuple, one scenario)"
    )


def test_criterion_8_determinism():
    for name in bundled_names():
        s = with_overrides(load_bundled(name), seed=DETERMINISM_SEED)
        first = "\n".join(trace_to_jsonl(run_scenario(s).trace))
        second = "\n".join(trace_to_jsonl(run_scenario(s).trace))
        assert first == second, f"{name} trace differs between identical runs"
    print(
        f"criterion 8 determinism: PASS (all {len(bundled_names())} bundled scenarios "
        f"byte-identical at seed {DETERMINISM_SEED})"
    )


_COMP_POOL = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJ0123456789-_~"
_VERB_LIST = sorted((READ, PREPARE, ACCEPT, LEARN))


def _rand_comp(rng, dots_ok=True):
    if rng.random() < 0.04:
        return rng.choice(_VERB_LIST)  # verb words are legal components
    pool = _COMP_POOL + (".π" if dots_ok else "π")
    return "".join(rng.choice(pool) for _ in range(rng.randint(1, 8)))


def _rand_name(rng):
    scheme = rng.choice((INDIVIDUAL, GROUP))
    if scheme == INDIVIDUAL:
        verb = rng.choice((READ, PREPARE, ACCEPT, LEARN))
    else:
        verb = rng.choice((PREPARE, ACCEPT, LEARN))
    ballot = None
    if verb != READ or rng.random() < 0.7:
        prio = rng.randint(0, 99) if rng.random() < 0.5 else None
        ballot = BallotNumber(
            rng.randint(0, 10**6), _rand_comp(rng, dots_ok=False), priority=prio
        )
    it = rng.randint(0, 10**4) if ballot is not None and rng.random() < 0.6 else None
    kw = {
        "grp": _rand_comp(rng),
        "prg": _rand_comp(rng),
        "var": _rand_comp(rng),
        "verb": verb,
        "ballot": ballot,
        "iter": it,
    }
    if scheme == INDIVIDUAL:
        kw["prefix"] = tuple(_rand_comp(rng) for _ in range(rng.randint(1, 3)))
    else:
        kw["grpver"] = rng.randint(0, 999)
    return ConsensusName(scheme=scheme, **kw)


def _mutate(rng, s):
    for _ in range(rng.randint(1, 3)):
        k = rng.randrange(8)
        i = rng.randrange(len(s) + 1)
        if k == 0 and s:
            j = i % len(s)
            s = s[:j] + s[j + 1:]
        elif k == 1:
            s = s[:i] + rng.choice("/.\x00vπ0 %") + s[i:]
        elif k == 2 and s:
            j = i % len(s)
            s = s[:j] + rng.choice("/.x0V ") + s[j + 1:]
        elif k == 3:
            s = s[:i]
        elif k == 4:
            s = s + rng.choice(("/", "//", "/read", ".", "/v", "/0x"))
        elif k == 5:
            s = rng.choice(("", "/", "//", "read", "\x00", "////")) + s
        elif k == 6 and s:
            s = s.swapcase()
        else:
            s = "".join(rng.choice("/.vx09π") for _ in range(rng.randint(0, 12)))
    return s


def test_criterion_9_naming_fuzz():
    rng = random.Random(0xC0FFEE)
    t0 = time.perf_counter()
    for _ in range(FUZZ_VALID):
        name = _rand_name(rng)
        assert parse_name(encode_name(name), name.scheme) == name
    for i in range(FUZZ_MUTANTS):
        mutant = _mutate(rng, encode_name(_rand_name(rng)))
        scheme = INDIVIDUAL if i % 2 else GROUP
        try:
            parse_name(mutant, scheme)
        except NamingError:
            pass
        except Exception as exc:  # anything else is a parser crash
            pytest.fail(f"parser crashed on {mutant!r} under {scheme}: {exc!r}")
    dt = time.perf_counter() - t0
    print(
        f"criterion 9 naming fuzz: PASS ({FUZZ_VALID} round-trips exact, "
        f"{FUZZ_MUTANTS} mutants crash-free, {dt:.1f}s)"
    )

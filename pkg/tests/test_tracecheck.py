"""Trace invariant checks: clean runs pass, seeded defects are caught."""

import pytest

from ccnpaxos.errors import TraceError
from ccnpaxos.naming import GROUP, INDIVIDUAL
from ccnpaxos.netsim import trace_to_jsonl
from ccnpaxos.tracecheck import check_file, check_trace, from_jsonl
from ccnpaxos.wire import Value

from test_node import Cluster


def L(t, kind, frm="", to="", name="", digest="", **extra):
    return (t, kind, frm, to, name, digest, extra or None)


def run_cluster(mode, loss=0.0, seed=0):
    c = Cluster(mode=mode, n_prop=2, n_acc=3, loss=loss, seed=seed, delay=(1, 5))
    c.at(5, lambda net, now: c["p0"].contend(net, now))
    c.at(9, lambda net, now: c["p1"].contend(net, now))

    def push(net, now):
        master = next((s for s in c.servers.values() if s.is_master()), None)
        if master is not None:
            master.submit_value(net, Value.opaque(b"payload"), now)

    c.at(400, push)
    c.net.run()
    return c


# --- clean runs ----------------------------------------------------------------


@pytest.mark.parametrize("mode", [INDIVIDUAL, GROUP])
def test_clean_run_has_no_violations(mode):
    c = run_cluster(mode)
    assert check_trace(c.net.trace) == []


@pytest.mark.parametrize("seed", range(5))
def test_lossy_run_still_has_no_violations(seed):
    c = run_cluster(INDIVIDUAL, loss=0.2, seed=seed)
    assert check_trace(c.net.trace) == []


def test_empty_trace_passes_vacuously():
    assert check_trace([]) == []


# --- seeded defects, one check at a time -----------------------------------------


def test_conflicting_settlements_flag_agreement():
    trace = [
        L(0, "submitted", "p0", digest="d1", var="master"),
        L(0, "submitted", "p1", digest="d2", var="master"),
        L(5, "chosen", "p0", digest="d1", var="master", iter=0, acks=2, grpver=0),
        L(9, "learned", "a0", digest="d2", var="master", iter=0, grpver=0),
    ]
    found = check_trace(trace)
    assert [v.check for v in found] == ["agreement"]
    assert found[0].t == 9
    assert "master[0]" in found[0].detail


def test_settlement_without_submission_flags_validity():
    trace = [L(5, "learned", "a0", digest="ghost", var="master", iter=0, grpver=0)]
    assert [v.check for v in check_trace(trace)] == ["validity"]


def test_submission_under_another_var_does_not_count():
    trace = [
        L(0, "submitted", "p0", digest="d", var="other"),
        L(5, "chosen", "p0", digest="d", var="master", iter=0, acks=2, grpver=0),
    ]
    assert [v.check for v in check_trace(trace)] == ["validity"]


def test_node_revising_a_slot_flags_stability():
    trace = [
        L(0, "submitted", "p0", digest="d1", var="m"),
        L(0, "submitted", "p0", digest="d2", var="m"),
        L(5, "learned", "a0", digest="d1", var="m", iter=0, grpver=0),
        L(9, "learned", "a0", digest="d2", var="m", iter=0, grpver=0),
    ]
    # the flip breaks both the global and the per-node invariant
    assert [v.check for v in check_trace(trace)] == ["agreement", "stability"]


def test_same_slot_on_other_nodes_is_fine():
    trace = [
        L(0, "submitted", "p0", digest="d", var="m"),
        L(5, "chosen", "p0", digest="d", var="m", iter=0, acks=2, grpver=0),
        L(6, "learned", "a0", digest="d", var="m", iter=0, grpver=0),
        L(7, "ingested", "a1", digest="d", var="m", iter=0),
        L(8, "learned", "a0", digest="d", var="m", iter=0, grpver=0),
    ]
    assert check_trace(trace) == []


def test_settlement_line_without_slot_fields_is_flagged():
    assert [v.check for v in check_trace([L(5, "chosen", "p0", digest="d")])] == ["malformed"]


def cache_line(t, stored_at, max_age):
    return L(
        t,
        "content_object",
        "fwd0",
        "p0",
        "/a0/kv/x/read",
        "d",
        cache_hit=True,
        stored_at=stored_at,
        max_age_ms=max_age,
    )


def test_cache_serves_fresh_content():
    assert check_trace([cache_line(3, stored_at=0, max_age=5)]) == []


@pytest.mark.parametrize("t", [5, 10])
def test_cache_serving_expired_content_is_flagged(t):
    # eviction happens at stored_at + max_age, so age 5 is already stale
    found = check_trace([cache_line(t, stored_at=0, max_age=5)])
    assert [v.check for v in found] == ["cache_freshness"]


TOPO = L(0, "topology", forwarders=["fwd0"], nodes=["a0", "p0"])


def test_content_retracing_an_interest_is_fine():
    trace = [
        TOPO,
        L(1, "interest", "p0", "fwd0", "/a0/q", "d"),
        L(2, "interest", "fwd0", "a0", "/a0/q", "d"),
        L(3, "content_object", "a0", "fwd0", "/a0/q", "r"),
        L(4, "content_object", "fwd0", "p0", "/a0/q", "r"),
    ]
    assert check_trace(trace) == []


def test_unsolicited_content_from_forwarder_is_flagged():
    trace = [TOPO, L(4, "content_object", "fwd0", "p0", "/a0/q", "r")]
    assert [v.check for v in check_trace(trace)] == ["reverse_path"]


def test_one_interest_covers_only_one_content_object():
    trace = [
        TOPO,
        L(1, "interest", "p0", "fwd0", "/a0/q", "d"),
        L(4, "content_object", "fwd0", "p0", "/a0/q", "r"),
        L(5, "content_object", "fwd0", "p0", "/a0/q", "r"),
    ]
    found = check_trace(trace)
    assert [v.check for v in found] == ["reverse_path"]
    assert found[0].t == 5


def test_duplicated_interest_earns_a_second_response():
    trace = [
        TOPO,
        L(1, "interest", "p0", "fwd0", "/a0/q", "d"),
        L(1, "dup", "p0", "fwd0", "/a0/q", "d", of="interest"),
        L(4, "content_object", "fwd0", "p0", "/a0/q", "r"),
        L(5, "content_object", "fwd0", "p0", "/a0/q", "r"),
    ]
    assert check_trace(trace) == []


def test_content_between_endpoints_is_not_reverse_path_checked():
    # only forwarder hops carry the reverse-path obligation
    trace = [TOPO, L(4, "content_object", "a0", "fwd0", "/a0/q", "r")]
    assert check_trace(trace) == []


# --- JSON-lines form -------------------------------------------------------------


def test_jsonl_round_trip_on_a_real_trace():
    trace = run_cluster(INDIVIDUAL).net.trace
    assert from_jsonl(trace_to_jsonl(trace)) == trace


def test_checking_a_trace_file(tmp_path):
    c = run_cluster(GROUP)
    path = tmp_path / "run.jsonl"
    path.write_text("\n".join(trace_to_jsonl(c.net.trace)) + "\n", encoding="utf-8")
    assert check_file(path) == []


def test_blank_lines_are_skipped():
    assert from_jsonl(["", "  ", "\n"]) == []


def test_empty_file_passes_vacuously(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert check_file(path) == []


@pytest.mark.parametrize(
    "line,hint",
    [
        ("{not json", "invalid JSON"),
        ("[1, 2]", "expected an object"),
        ('{"t": 1, "kind": "interest"}', "missing field"),
    ],
)
def test_unreadable_lines_raise(line, hint):
    with pytest.raises(TraceError, match=hint):
        from_jsonl(['{"t": 0, "kind": "topology", "from": "", "to": "", '
                    '"name": "", "payload_digest": ""}', line])


def test_error_reports_the_line_number():
    good = '{"t": 0, "kind": "x", "from": "", "to": "", "name": "", "payload_digest": ""}'
    with pytest.raises(TraceError, match="line 3"):
        from_jsonl([good, good, "{broken"])


def test_missing_file_raises(tmp_path):
    with pytest.raises(TraceError, match="cannot read"):
        check_file(tmp_path / "nope.jsonl")

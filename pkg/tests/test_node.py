"""Server behavior: reliable exchanges, dispatch, elections, reconfiguration."""

import pytest

from ccnpaxos.group import GroupConfig, Member
from ccnpaxos.naming import GROUP, INDIVIDUAL, BallotNumber
from ccnpaxos.netsim import Network, SimConfig
from ccnpaxos.node import NodeConfig, Server
from ccnpaxos.wire import (
    CONTENT_OBJECT,
    INTEREST,
    PUSH,
    PUSH_ACK,
    Ack,
    AcceptReq,
    AcceptResp,
    Entry,
    Learn,
    Message,
    Nack,
    PrepareReq,
    PrepareResp,
    ReadReq,
    ReadResp,
    Value,
)

from test_netsim import reverse_path_violations


class Driver:
    """Pseudo-node that fires scripted actions inside the event loop."""

    def on_message(self, net, msg, now):
        pass

    def on_timer(self, net, tag, now):
        tag[1](net, now)


class RecordingClient:
    def __init__(self):
        self.got = []

    def on_message(self, net, msg, now):
        self.got.append(msg)

    def on_timer(self, net, tag, now):
        pass


class Cluster:
    """Star topology with p* proposer nodes and a* acceptor+learner nodes.

    a0 is the initial learner target.  Standby nodes are attached and hold
    the same bootstrap group view but are not members of it.
    """

    def __init__(
        self,
        mode=INDIVIDUAL,
        n_prop=1,
        n_acc=3,
        seed=0,
        loss=0.0,
        dup=0.0,
        delay=(1, 1),
        priorities=None,
        retry=(3, 4500),
        standby=(),
        read_max_age_ms=0,
    ):
        members = tuple(Member(f"a{i}", f"/a{i}") for i in range(n_acc))
        self.group = GroupConfig("g", 0, members, "/a0")
        self.net = Network(
            SimConfig(seed=seed, delay_ms=delay, loss_prob=loss, dup_prob=dup)
        )
        self.servers = {}
        prop_prefixes = []
        for i in range(n_prop):
            nid = f"p{i}"
            cfg = NodeConfig(
                nid,
                f"/{nid}",
                roles=frozenset({"proposer"}),
                mode=mode,
                priority=(priorities or {}).get(nid),
                retry=retry,
            )
            self._add(cfg, read_max_age_ms)
            prop_prefixes.append(cfg.prefix)
        for i in range(n_acc):
            cfg = NodeConfig(
                f"a{i}",
                f"/a{i}",
                roles=frozenset({"acceptor", "learner"}),
                mode=mode,
                retry=retry,
            )
            self._add(cfg, read_max_age_ms)
        for nid, prefix in standby:
            cfg = NodeConfig(
                nid,
                prefix,
                roles=frozenset({"acceptor", "learner"}),
                mode=mode,
                retry=retry,
            )
            self._add(cfg, read_max_age_ms)
        for srv in self.servers.values():
            srv.notify_prefixes = list(prop_prefixes)
        if mode == GROUP:
            for i in range(n_acc):
                self.net.subscribe(f"a{i}", "/g/v0")
        self.net.attach("drv", Driver())

    def _add(self, cfg, read_max_age_ms):
        srv = Server(cfg, self.group, read_max_age_ms=read_max_age_ms)
        self.servers[cfg.id] = srv
        self.net.attach(cfg.id, srv, prefixes=(cfg.prefix,))

    def at(self, t, fn):
        self.net.set_timer("drv", t, ("act", fn))

    def __getitem__(self, nid) -> Server:
        return self.servers[nid]


# --- reliable exchange policy -------------------------------------------------


def test_reliable_send_stops_after_retry_budget():
    # count=3 means one initial send plus three retransmissions
    c = Cluster(n_acc=1, loss=1.0, retry=(3, 10))
    c.at(0, lambda net, now: c["p0"].contend(net, now))
    c.net.run(until=100)
    sends = [l for l in c.net.trace if l[1] == "drop_loss" and l[2] == "p0"]
    assert len(sends) == 4
    assert any(l[1] == "unreachable" and l[2] == "p0" for l in c.net.trace)
    assert any(l[1] == "round_abandoned" and l[2] == "p0" for l in c.net.trace)


def test_response_halts_retransmission():
    c = Cluster(n_acc=1, retry=(3, 50))
    c.at(0, lambda net, now: c["p0"].contend(net, now))
    c.net.run()
    prepares = [
        l
        for l in c.net.trace
        if l[2] == "p0" and l[1] == "interest" and "/prepare/" in l[4]
    ]
    assert len(prepares) == 1
    assert not [l for l in c.net.trace if l[1] == "unreachable"]


def test_reliable_delivery_rate_under_heavy_loss():
    net = Network(SimConfig(seed=7, delay_ms=(1, 1), loss_prob=0.5))

    class Sink:
        def __init__(self):
            self.seen = set()

        def on_message(self, net, msg, now):
            self.seen.add(msg.name)
            net.submit("r", Message(CONTENT_OBJECT, msg.name, Ack()))

        def on_timer(self, net, tag, now):
            pass

    sink = Sink()
    net.attach("r", sink, prefixes=("/r",))
    cfg = NodeConfig("c0", "/c0", roles=frozenset({"proposer"}), retry=(3, 10))
    srv = Server(cfg, GroupConfig("g", 0, (Member("a0", "/a0"),), "/a0"))
    net.attach("c0", srv, prefixes=("/c0",))
    trials = 1000
    for i in range(trials):
        srv._send_reliable(
            net, Message(INTEREST, f"/r/t{i}", ReadReq()), lambda net, p, f, now: True
        )
    net.run()
    # four independent chances for the request to survive a 0.5 loss rate
    assert len(sink.seen) / trials >= 1 - 0.5**4 - 0.03


# --- dispatch ----------------------------------------------------------------


def test_prepare_interest_answered_with_content_object():
    c = Cluster()
    rec = RecordingClient()
    c.net.attach("c", rec, prefixes=("/c",))
    name = "/a0/g/kv/master/prepare/1.p0"
    c.at(
        0,
        lambda net, now: net.submit(
            "c", Message(INTEREST, name, PrepareReq(response_target="/c"))
        ),
    )
    c.net.run()
    cos = [m for m in rec.got if m.kind == CONTENT_OBJECT]
    assert len(cos) == 1
    assert cos[0].name == name  # response rides the exact request name
    resp = cos[0].payload
    assert isinstance(resp, PrepareResp)
    assert resp.ack and resp.current_max == BallotNumber(1, "p0")
    assert resp.prior == ()


def test_group_accept_push_answered_by_unicast_pushes():
    c = Cluster(mode=GROUP)
    rec = RecordingClient()
    c.net.attach("c", rec, prefixes=("/c",))
    name = "/g/v0/kv/master/accept/2.p0/0"
    req = AcceptReq(Value.opaque(b"V"), response_target="/c")
    c.at(0, lambda net, now: net.submit("c", Message(PUSH, name, req)))
    c.net.run()
    resps = [m for m in rec.got if m.kind == PUSH and isinstance(m.payload, AcceptResp)]
    assert len(resps) == 3  # every subscribed acceptor answers
    assert all(m.payload.ack for m in resps)
    assert all(m.name == name for m in resps)
    assert all(m.payload.current_max == BallotNumber(2, "p0") for m in resps)


def test_targeted_learn_push_gets_push_ack():
    c = Cluster(mode=GROUP)
    rec = RecordingClient()
    c.net.attach("c", rec, prefixes=("/c",))
    entry = Entry(BallotNumber(1, "a1"), 0, Value.opaque(b"X"))
    payload = Learn((entry,), 0, response_target="/c")
    name = "/g/v0/kv/master/learn/1.a1/0"
    c.at(
        0,
        lambda net, now: net.submit("c", Message(PUSH, name, payload, to_target="/a0")),
    )
    c.net.run()
    acks = [m for m in rec.got if m.kind == PUSH_ACK]
    assert len(acks) == 1
    assert isinstance(acks[0].payload, Ack)


def test_wrong_payload_for_verb_is_nacked():
    c = Cluster()
    rec = RecordingClient()
    c.net.attach("c", rec, prefixes=("/c",))
    name = "/a0/g/kv/master/prepare/1.p0"
    c.at(
        0,
        lambda net, now: net.submit(
            "c", Message(INTEREST, name, AcceptReq(Value.opaque(b"x")))
        ),
    )
    c.net.run()
    assert [type(m.payload) for m in rec.got] == [Nack]
    assert any(l[1] == "bad_verb_payload" for l in c.net.trace)


# --- elections ------------------------------------------------------------------


def test_single_contender_wins_and_every_node_learns():
    c = Cluster()
    c.at(0, lambda net, now: c["p0"].contend(net, now))
    c.net.run()
    assert c["p0"].is_master()
    desc = c["p0"].descriptor
    for srv in c.servers.values():
        assert srv.merged_log() == {0: desc}
        assert srv.master_hint == "/p0"
    seen = {l[1] for l in c.net.trace}
    assert {"master_elected", "chosen", "learned", "ingested"} <= seen


@pytest.mark.parametrize("mode", [INDIVIDUAL, GROUP])
def test_two_contenders_settle_on_one_master(mode):
    for seed in range(100):
        c = Cluster(mode=mode, n_prop=2, seed=seed, delay=(1, 5))
        c.at(0, lambda net, now: c["p0"].contend(net, now))
        c.at(0, lambda net, now: c["p1"].contend(net, now))
        c.net.run()
        masters = [s for s in (c["p0"], c["p1"]) if s.is_master()]
        assert len(masters) == 1, f"seed {seed}: {len(masters)} masters"
        logs = {nid: srv.merged_log() for nid, srv in c.servers.items()}
        base = logs["p0"]
        assert all(log == base for log in logs.values()), f"seed {seed}"
        # the elected node owns the descriptor at the lowest descriptor slot
        descs = [(i, v) for i, v in sorted(base.items()) if v.kind == "link"]
        assert descs and descs[0][1] == masters[0].descriptor, f"seed {seed}"


def test_priority_wins_ballot_race():
    c = Cluster(n_prop=2, priorities={"p0": 9, "p1": 1})
    c.at(0, lambda net, now: c["p0"].contend(net, now))
    c.at(0, lambda net, now: c["p1"].contend(net, now))
    c.net.run()
    assert c["p0"].is_master()
    assert c["p1"].follower and not c["p1"].is_master()


def test_low_priority_loses_even_when_first():
    # same instant, lower priority submitted first: still loses the race
    c = Cluster(n_prop=2, priorities={"p0": 1, "p1": 9})
    c.at(0, lambda net, now: c["p0"].contend(net, now))
    c.at(0, lambda net, now: c["p1"].contend(net, now))
    c.net.run()
    assert c["p1"].is_master()
    assert c["p0"].follower


# --- reads ------------------------------------------------------------------------


def test_read_paths():
    c = Cluster(n_prop=2)
    c.at(0, lambda net, now: c["p0"].contend(net, now))
    c.at(50, lambda net, now: c["p0"].submit_value(net, Value.opaque(b"V"), now))
    c.at(100, lambda net, now: c["p1"].send_read(net, "/p0"))
    # iter in a read name only rides behind a ballot
    c.at(
        100,
        lambda net, now: c["p1"].send_read(
            net, "/p0", ballot=c["p0"]._proposer("master").ballot, iter=7
        ),
    )
    c.at(100, lambda net, now: c["p1"].send_read(net, "/a1"))
    c.net.run()
    resps = [p for _, p in c["p1"].read_results]
    reads = [p for p in resps if isinstance(p, ReadResp)]
    nacks = [p for p in resps if isinstance(p, Nack)]
    assert len(reads) == 1 and len(nacks) == 2
    assert [e.iter for e in reads[0].found] == [0, 1]
    assert reads[0].found[1].value == Value.opaque(b"V")
    redirects = [l for l in c.net.trace if l[1] == "read_redirect"]
    assert redirects and redirects[0][6]["hint"] == "/p0"


def test_skip_and_noop_fill_make_slots_definite():
    c = Cluster()
    c.at(0, lambda net, now: c["p0"].contend(net, now))
    c.at(50, lambda net, now: c["p0"].skip_slot(net))
    c.at(60, lambda net, now: c["p0"].submit_value(net, Value.opaque(b"after"), now))
    c.at(
        100,
        lambda net, now: c["p0"].fill_noops(
            net, c["p0"]._proposer("master").next_iter, now
        ),
    )
    c.at(
        150,
        lambda net, now: c["p0"].send_read(
            net, "/p0", ballot=c["p0"]._proposer("master").ballot, iter=1
        ),
    )
    c.net.run()
    want = {0: c["p0"].descriptor, 1: Value.noop(), 2: Value.opaque(b"after")}
    for srv in c.servers.values():
        assert srv.merged_log() == want
    (got_iter, payload), = [r for r in c["p0"].read_results]
    assert got_iter == 1
    assert isinstance(payload, ReadResp)
    assert payload.found[0].value.is_noop


# --- role co-residence ----------------------------------------------------------------


def test_solo_node_talks_to_itself_over_the_network():
    group = GroupConfig("g", 0, (Member("solo", "/solo"),), "/solo")
    net = Network(SimConfig(seed=3, delay_ms=(1, 1)))
    srv = Server(NodeConfig("solo", "/solo"), group)
    net.attach("solo", srv, prefixes=("/solo",))
    net.attach("drv", Driver())
    net.set_timer("drv", 0, ("act", lambda net, now: srv.contend(net, now)))
    net.run()
    assert srv.is_master()
    assert srv.merged_log() == {0: srv.descriptor}
    # prepare, accept, and learn each crossed the forwarder, no self-shortcut
    for verb in ("/prepare/", "/accept/", "/learn/"):
        out = [
            l
            for l in net.trace
            if l[1] == "interest" and l[2] == "solo" and l[3] == "fwd0" and verb in l[4]
        ]
        back = [
            l
            for l in net.trace
            if l[1] == "interest" and l[2] == "fwd0" and l[3] == "solo" and verb in l[4]
        ]
        assert out and back
    assert reverse_path_violations(net.trace) == 0


# --- mode equivalence -------------------------------------------------------------------


def test_modes_produce_identical_logs():
    def run(mode):
        c = Cluster(mode=mode, seed=11)
        c.at(0, lambda net, now: c["p0"].contend(net, now))
        c.at(60, lambda net, now: c["p0"].submit_value(net, Value.opaque(b"one"), now))
        c.at(90, lambda net, now: c["p0"].submit_value(net, Value.opaque(b"two"), now))
        c.net.run()
        return {nid: srv.merged_log() for nid, srv in c.servers.items()}

    individual = run(INDIVIDUAL)
    multicast = run(GROUP)
    assert individual == multicast
    want = {
        0: Value.link("/p0/descriptor"),
        1: Value.opaque(b"one"),
        2: Value.opaque(b"two"),
    }
    assert all(log == want for log in individual.values())


# --- reconfiguration ------------------------------------------------------------------------


@pytest.mark.parametrize("mode", [INDIVIDUAL, GROUP])
def test_membership_add_raises_quorum(mode):
    c = Cluster(mode=mode, standby=(("a3", "/a3"),))
    c.at(0, lambda net, now: c["p0"].contend(net, now))
    c.at(
        50,
        lambda net, now: c["p0"].change_membership(net, now, add=Member("a3", "/a3")),
    )
    c.at(150, lambda net, now: c["p0"].submit_value(net, Value.opaque(b"post"), now))
    c.net.run()
    for nid in ("p0", "a0", "a1", "a2", "a3"):
        assert c[nid].group.grpver == 1, nid
        assert set(c[nid].group.member_ids()) == {"a0", "a1", "a2", "a3"}, nid
        assert c[nid].group.majority == 3
    post = Value.opaque(b"post")
    chose = [l for l in c.net.trace if l[1] == "chosen" and l[5] == post.digest()]
    assert chose
    assert chose[0][6]["grpver"] == 1
    assert chose[0][6]["acks"] >= 3
    assert post in c["a3"].merged_log().values()


def test_learner_target_change_moves_tallying():
    c = Cluster()
    c.at(0, lambda net, now: c["p0"].contend(net, now))
    c.at(50, lambda net, now: c["p0"].change_learner(net, now, "/a1"))
    c.at(150, lambda net, now: c["p0"].submit_value(net, Value.opaque(b"late"), now))
    c.net.run()
    for nid in ("p0", "a0", "a1", "a2"):
        assert c[nid].group.learner_target == "/a1", nid
    late = Value.opaque(b"late")
    learned_late = [l for l in c.net.trace if l[1] == "learned" and l[5] == late.digest()]
    assert learned_late
    assert all(l[2] == "a1" for l in learned_late)
    for srv in c.servers.values():
        assert late in srv.merged_log("master").values()

"""Protocol node: one server that can propose, accept, and learn.

A Server binds the pure role transitions to the simulator: it builds
names, wraps payloads in Interests or Pushes depending on its signaling
mode, retries unanswered exchanges, and applies learned meta-values
(membership and learner-target changes) to its group view.

Signaling modes
---------------
individual   every request is an Interest addressed to one peer's prefix;
             the response is a ContentObject on the same name riding the
             reverse path.
multicast    prepare/accept/learn requests are single Pushes on the
             group-version name, fanned out by the forwarder; responses
             are unicast Pushes steered by to_target, acknowledged learns
             by PushAck.

Mastership is a value: a contender proposes a link to its own descriptor
name, and whichever descriptor gets chosen first settles the election.
Losers fall back to follower behavior until a new election is triggered
from outside.
"""

from __future__ import annotations

import itertools

from dataclasses import dataclass

from .errors import ProtocolError, ScenarioError
from .group import (
    Add,
    GroupConfig,
    Member,
    Remove,
    apply_learner,
    apply_membership,
    propose_learner_change,
    propose_membership_change,
)
from .naming import (
    ACCEPT,
    GROUP,
    INDIVIDUAL,
    LEARN,
    PREPARE,
    READ,
    BallotNumber,
    ConsensusName,
    parse_name,
)
from .paxos import (
    IDLE,
    MASTER,
    PREPARING,
    AcceptorState,
    LearnerState,
    ProposerState,
    acceptor_on_accept,
    acceptor_on_prepare,
    learner_aggregate,
    learner_ingest,
    learner_on_learn,
    proposer_fill_noops,
    proposer_on_accept_resp,
    proposer_on_promise,
    proposer_on_read,
    proposer_start_round,
    proposer_submit,
)
from .wire import (
    CONTENT_OBJECT,
    INTEREST,
    LINK,
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

__all__ = ["NodeConfig", "Server", "RESERVED_MEMBERS", "RESERVED_LEARNER"]

PROPOSER = "proposer"
ACCEPTOR = "acceptor"
LEARNER = "learner"
ROLES = frozenset((PROPOSER, ACCEPTOR, LEARNER))

# meta-state rides ordinary consensus under reserved variable names
RESERVED_MEMBERS = "__acceptors"
RESERVED_LEARNER = "__learner"

_EXPECTED_REQUEST = {PREPARE: PrepareReq, ACCEPT: AcceptReq, LEARN: Learn, READ: ReadReq}


@dataclass(frozen=True)
class NodeConfig:
    """Identity, roles, signaling mode, and retry policy of one node.

    retry is (count, backoff_ms): an exchange is sent once plus up to
    count retransmissions, backoff_ms apart.  The default backoff sits
    above the forwarder's PIT lifetime so a retransmission is forwarded
    again instead of being aggregated onto a dead entry.
    """

    id: str
    prefix: str
    roles: frozenset = frozenset(ROLES)
    mode: str = INDIVIDUAL
    priority: int | None = None
    retry: tuple[int, int] = (3, 4500)

    def __post_init__(self):
        if not self.prefix.startswith("/") or self.prefix.rstrip("/") != self.prefix:
            raise ScenarioError(f"bad prefix {self.prefix!r}")
        if not frozenset(self.roles) <= ROLES:
            raise ScenarioError(f"unknown roles {set(self.roles) - ROLES}")
        object.__setattr__(self, "roles", frozenset(self.roles))
        if self.mode not in (INDIVIDUAL, GROUP):
            raise ScenarioError(f"unknown mode {self.mode!r}")
        count, backoff = self.retry
        if count < 0 or backoff <= 0:
            raise ScenarioError(f"bad retry policy {self.retry!r}")


class _Pending:
    """One in-flight request: the message, its retry budget, and callbacks."""

    __slots__ = ("msg", "on_ok", "on_fail", "attempt", "token", "multi")

    def __init__(self, msg, on_ok, on_fail, token, multi):
        self.msg = msg
        self.on_ok = on_ok
        self.on_fail = on_fail
        self.attempt = 0
        self.token = token
        self.multi = multi


def _prefix_comps(prefix: str) -> tuple:
    return tuple(prefix.strip("/").split("/"))


class Server:
    """A participant node hosting any subset of the three roles.

    All per-variable protocol state is keyed by the variable name, so the
    data variable and the reserved meta-variables run the same machinery.
    The server is a sequential reactor: the simulator calls on_message and
    on_timer, the scenario driver calls the public verbs (contend,
    submit_value, ...) at scripted times.
    """

    def __init__(
        self,
        cfg: NodeConfig,
        group: GroupConfig,
        prg: str = "kv",
        var: str = "master",
        read_max_age_ms: int = 0,
    ):
        self.cfg = cfg
        self.node_id = cfg.id
        self.prg = prg
        self.var = var
        self.read_max_age_ms = read_max_age_ms
        self.groups: dict[int, GroupConfig] = {group.grpver: group}
        self.group = group
        self.acceptors: dict[str, AcceptorState] = {}
        self.proposers: dict[str, ProposerState] = {}
        self.learners: dict[str, LearnerState] = {}
        # exchanges are keyed (name, to_target or "") so unicast pushes that
        # share a group name stay distinguishable
        self.pending: dict[tuple, _Pending] = {}
        self.queue: dict[str, list[Value]] = {}
        self.notify_prefixes: list[str] = []  # extra learn-announcement targets
        self.contending = False
        self.follower = False
        self.master_hint = ""
        self.read_results: list[tuple] = []
        self.descriptor = Value.link(cfg.prefix + "/descriptor")
        self._descriptor_settled = False
        self._election: tuple | None = None  # (iter, descriptor value), min iter wins
        self._round_keys: dict[str, set] = {}
        self._accept_keys: dict[tuple, set] = {}
        self._restart_armed: set = set()
        self._token = itertools.count()

    # -- state accessors -------------------------------------------------

    def _key(self, var):
        return (self.group.grp, self.prg, var)

    def _acceptor(self, var) -> AcceptorState:
        s = self.acceptors.get(var)
        if s is None:
            s = self.acceptors[var] = AcceptorState(self._key(var))
        return s

    def _proposer(self, var) -> ProposerState:
        s = self.proposers.get(var)
        if s is None:
            s = self.proposers[var] = ProposerState(
                self.node_id, self._key(var), priority=self.cfg.priority
            )
        return s

    def _learner(self, var) -> LearnerState:
        s = self.learners.get(var)
        if s is None:
            s = self.learners[var] = LearnerState(self._key(var))
        return s

    def merged_log(self, var=None) -> dict[int, Value]:
        """iter -> Value as this node currently knows it (chosen + learned)."""
        var = self.var if var is None else var
        out: dict[int, Value] = {}
        lrn = self.learners.get(var)
        if lrn is not None:
            for it, (_, v) in lrn.learned.items():
                out[it] = v
        prop = self.proposers.get(var)
        if prop is not None:
            for it, (_, v) in prop.chosen.items():
                if it in out and out[it] != v:
                    raise ProtocolError(f"log split at iter {it} on {self.node_id}")
                out[it] = v
        return out

    def is_master(self, var=None) -> bool:
        p = self.proposers.get(self.var if var is None else var)
        return p is not None and p.phase == MASTER

    def current_ballot(self, var=None):
        """This node's round ballot, or None when it has not started one."""
        p = self.proposers.get(self.var if var is None else var)
        return None if p is None else p.ballot

    def snapshot(self) -> dict:
        """Summary view used by the CLI report and the equivalence tests."""
        logs = {}
        for var in set(self.proposers) | set(self.learners):
            log = self.merged_log(var)
            logs[var] = {
                it: {"kind": v.kind, "digest": v.digest()}
                for it, v in sorted(log.items())
            }
        return {
            "id": self.node_id,
            "master": self.is_master(),
            "grpver": self.group.grpver,
            "logs": logs,
        }

    # -- name building -----------------------------------------------------

    def _iname(self, prefix, var, verb, ballot=None, iter=None) -> str:
        return ConsensusName(
            INDIVIDUAL,
            self.group.grp,
            self.prg,
            var,
            verb,
            prefix=_prefix_comps(prefix),
            ballot=ballot,
            iter=iter,
        ).encode()

    def _gname(self, var, verb, ballot, iter=None, grpver=None) -> str:
        return ConsensusName(
            GROUP,
            self.group.grp,
            self.prg,
            var,
            verb,
            grpver=self.group.grpver if grpver is None else grpver,
            ballot=ballot,
            iter=iter,
        ).encode()

    # -- reliable exchanges --------------------------------------------------

    def _send_reliable(self, net, msg, on_ok, on_fail=None, multi=False):
        key = (msg.name, msg.to_target or "")
        entry = _Pending(msg, on_ok, on_fail, next(self._token), multi)
        self.pending[key] = entry
        net.submit(self.node_id, msg)
        net.set_timer(self.node_id, self.cfg.retry[1], ("retry", key, 0, entry.token))
        return key

    def _cancel(self, key):
        self.pending.pop(key, None)

    def _feed_response(self, net, key, payload, from_id, now):
        entry = self.pending.get(key)
        if entry is None:
            return  # duplicate, cached, or late answer to a finished exchange
        done = entry.on_ok(net, payload, from_id, now)
        if done or not entry.multi:
            self._cancel(key)

    def on_timer(self, net, tag, now):
        kind = tag[0]
        if kind == "retry":
            _, key, attempt, token = tag
            entry = self.pending.get(key)
            if entry is None or entry.token != token or entry.attempt != attempt:
                return
            if entry.attempt >= self.cfg.retry[0]:
                self._cancel(key)
                net.observe(self.node_id, "unreachable", name=key[0])
                if entry.on_fail is not None:
                    entry.on_fail(net, now)
                return
            entry.attempt += 1
            net.submit(self.node_id, entry.msg)
            net.set_timer(
                self.node_id, self.cfg.retry[1], ("retry", key, entry.attempt, entry.token)
            )
        elif kind == "restart":
            var = tag[1]
            self._restart_armed.discard(var)
            if self._proposer(var).phase != IDLE:
                return
            if var == self.var:
                if self.contending and not self.follower:
                    self.contend(net, now)
            elif self.queue.get(var):
                self._start_round(net, var)

    def _arm_restart(self, net, var):
        """Schedule a jittered round restart if this node still wants one."""
        if var == self.var:
            want = self.contending and not self.follower
        else:
            want = bool(self.queue.get(var))
        if not want or var in self._restart_armed:
            return
        self._restart_armed.add(var)
        delay = 150 + net.rng.randint(0, 350)  # jitter breaks contender symmetry
        net.set_timer(self.node_id, delay, ("restart", var))

    def on_resume(self, net, now):
        """Warm restart: re-drive every outstanding exchange and round."""
        for key, entry in list(self.pending.items()):
            entry.attempt = 0
            entry.token = next(self._token)
            net.submit(self.node_id, entry.msg)
            net.set_timer(self.node_id, self.cfg.retry[1], ("retry", key, 0, entry.token))
        self._restart_armed.clear()
        for var in {self.var, *self.queue}:
            self._arm_restart(net, var)

    # -- proposer activity ------------------------------------------------------

    def contend(self, net, now):
        """Bid for mastership of the data variable with our descriptor."""
        if PROPOSER not in self.cfg.roles:
            raise ScenarioError(f"{self.node_id} has no proposer role")
        self.contending = True
        self.follower = False
        p = self._proposer(self.var)
        if not self._descriptor_settled and not self._descriptor_in_flight(p):
            q = self.queue.setdefault(self.var, [])
            if self.descriptor not in q:
                q.insert(0, self.descriptor)
                net.observe(
                    self.node_id,
                    "submitted",
                    digest=self.descriptor.digest(),
                    var=self.var,
                )
        if p.phase == IDLE:
            self._start_round(net, self.var)

    def _descriptor_in_flight(self, p) -> bool:
        return any(slot.value == self.descriptor for slot in p.pending.values())

    def _start_round(self, net, var):
        p = self._proposer(var)
        p, sends = proposer_start_round(p, self.group)
        net.observe(self.node_id, "round_started", var=var, ballot=p.ballot.encode())
        keys = self._round_keys.setdefault(var, set())
        keys.clear()
        if self.cfg.mode == INDIVIDUAL:
            for member, ballot in sends:
                name = self._iname(member.prefix, var, PREPARE, ballot)
                msg = Message(INTEREST, name, PrepareReq(response_target=self.cfg.prefix))
                keys.add(
                    self._send_reliable(
                        net,
                        msg,
                        self._promise_handler(var, member.id),
                        on_fail=self._round_fail_handler(var, p.ballot),
                    )
                )
        else:
            name = self._gname(var, PREPARE, p.ballot, grpver=p.round_grp.grpver)
            msg = Message(PUSH, name, PrepareReq(response_target=self.cfg.prefix))
            keys.add(
                self._send_reliable(
                    net,
                    msg,
                    self._promise_handler(var, None),
                    on_fail=self._round_fail_handler(var, p.ballot),
                    multi=True,
                )
            )

    def _promise_handler(self, var, member_id):
        def on_ok(net, payload, from_id, now):
            if not isinstance(payload, PrepareResp):
                return True  # mismatched answer ends the exchange
            self._on_prepare_resp(net, var, member_id or from_id, payload, now)
            return False  # multicast exchanges keep collecting answers
        return on_ok

    def _round_fail_handler(self, var, ballot):
        def on_fail(net, now):
            p = self._proposer(var)
            if p.phase == PREPARING and p.ballot == ballot:
                self._abandon_round(net, var)
        return on_fail

    def _abandon_round(self, net, var):
        p = self._proposer(var)
        p.phase = IDLE
        p.ballot = None
        p.promises = {}
        self._drop_round_keys(var)
        net.observe(self.node_id, "round_abandoned", var=var)
        self._arm_restart(net, var)

    def _drop_round_keys(self, var):
        for key in self._round_keys.get(var, ()):  # stop outstanding retries
            self._cancel(key)
        self._round_keys.get(var, set()).clear()

    def _on_prepare_resp(self, net, var, from_id, resp, now):
        p = self._proposer(var)
        if from_id is None:
            return
        was_preparing = p.phase == PREPARING
        p, phase2 = proposer_on_promise(p, from_id, resp, p.round_grp or self.group)
        if was_preparing and p.phase == IDLE:
            self._drop_round_keys(var)
            net.observe(self.node_id, "round_abandoned", var=var)
            self._arm_restart(net, var)
            return
        if phase2 is None:
            return
        self._drop_round_keys(var)
        net.observe(self.node_id, "master_elected", var=var, ballot=phase2.ballot.encode())
        self._send_accepts(net, var, phase2.reproposals)
        self._flush_queue(net, var, now)

    def _flush_queue(self, net, var, now):
        p = self._proposer(var)
        q = self.queue.get(var, [])
        while q and p.phase == MASTER:
            v = q.pop(0)
            if v == self.descriptor and (
                self._descriptor_settled or self._descriptor_in_flight(p)
            ):
                continue  # already chosen or re-proposed from a prior round
            p, sends = proposer_submit(p, v)
            self._send_accepts(net, var, sends)

    def submit_value(self, net, value: Value, now, var=None):
        """Propose a value; queued until this node holds mastership."""
        var = self.var if var is None else var
        net.observe(self.node_id, "submitted", digest=value.digest(), var=var)
        p = self._proposer(var)
        if p.phase == MASTER:
            p, sends = proposer_submit(p, value)
            self._send_accepts(net, var, sends)
        else:
            self.queue.setdefault(var, []).append(value)
            net.observe(self.node_id, "queued", digest=value.digest(), var=var)

    def fill_noops(self, net, up_to_iter, now, var=None):
        var = self.var if var is None else var
        noop = Value.noop()
        p = self._proposer(var)
        p, sends = proposer_fill_noops(p, up_to_iter)
        if sends:
            net.observe(self.node_id, "submitted", digest=noop.digest(), var=var)
        self._send_accepts(net, var, sends)

    def skip_slot(self, net, var=None):
        """Burn the next slot, as a round abandoned before any accept would."""
        var = self.var if var is None else var
        p = self._proposer(var)
        net.observe(self.node_id, "slot_skipped", var=var, iter=p.next_iter)
        p.next_iter += 1

    def _send_accepts(self, net, var, sends):
        if not sends:
            return
        if self.cfg.mode == INDIVIDUAL:
            for send in sends:
                name = self._iname(send.member.prefix, var, ACCEPT, send.ballot, send.iter)
                msg = Message(
                    INTEREST, name, AcceptReq(send.value, response_target=self.cfg.prefix)
                )
                key = self._send_reliable(
                    net, msg, self._accept_handler(var, send.member.id, send.iter)
                )
                self._accept_keys.setdefault((var, send.iter), set()).add(key)
        else:
            p = self._proposer(var)
            grpver = p.round_grp.grpver
            for it in sorted({s.iter for s in sends}):
                send = next(s for s in sends if s.iter == it)
                name = self._gname(var, ACCEPT, send.ballot, it, grpver=grpver)
                msg = Message(
                    PUSH, name, AcceptReq(send.value, response_target=self.cfg.prefix)
                )
                key = self._send_reliable(
                    net, msg, self._accept_handler(var, None, it), multi=True
                )
                self._accept_keys.setdefault((var, it), set()).add(key)

    def _accept_handler(self, var, member_id, it):
        def on_ok(net, payload, from_id, now):
            if not isinstance(payload, AcceptResp):
                return True
            self._on_accept_resp(net, var, member_id or from_id, it, payload, now)
            return False
        return on_ok

    def _on_accept_resp(self, net, var, from_id, it, resp, now):
        p = self._proposer(var)
        if from_id is None:
            return
        was_master = p.phase == MASTER
        p, chosen = proposer_on_accept_resp(p, from_id, it, resp)
        if was_master and p.phase == IDLE:
            for slot_key in [k for k in self._accept_keys if k[0] == var]:
                for key in self._accept_keys.pop(slot_key):
                    self._cancel(key)
            net.observe(self.node_id, "preempted", var=var)
            self._arm_restart(net, var)
            return
        if chosen is None:
            return
        for key in self._accept_keys.pop((var, it), ()):  # stop retries
            self._cancel(key)
        net.observe(
            self.node_id,
            "chosen",
            digest=chosen.value.digest(),
            var=var,
            iter=chosen.iter,
            acks=chosen.ack_count,
            grpver=chosen.grpver,
        )
        self._note_master(net, chosen.iter, chosen.value)
        self._apply_meta(net, var, Entry(chosen.ballot, chosen.iter, chosen.value))
        self._flush_queue(net, var, now)

    # -- read -------------------------------------------------------------------

    def send_read(self, net, target_prefix, ballot=None, iter=None, var=None):
        var = self.var if var is None else var
        name = self._iname(target_prefix, var, READ, ballot, iter)
        msg = Message(INTEREST, name, ReadReq(response_target=self.cfg.prefix))

        def on_ok(net, payload, from_id, now):
            self.read_results.append((iter, payload))
            if isinstance(payload, ReadResp):
                first = payload.found[0].value.digest() if payload.found else ""
                net.observe(
                    self.node_id,
                    "read_result",
                    name=name,
                    digest=first,
                    outcome="entries",
                    count=len(payload.found),
                    kinds=[e.value.kind for e in payload.found],
                    iters=[e.iter for e in payload.found],
                )
            else:
                net.observe(self.node_id, "read_result", name=name, outcome="nack")
            return True

        self._send_reliable(net, msg, on_ok)

    # -- meta variables -------------------------------------------------------------

    def change_membership(self, net, now, add: Member | None = None, remove: str | None = None):
        change = Add(add.id, add.prefix) if add is not None else Remove(remove)
        value = propose_membership_change(self.group, change)
        self._submit_meta(net, RESERVED_MEMBERS, value, now)

    def change_learner(self, net, now, target: str):
        value = propose_learner_change(self.group, target)
        self._submit_meta(net, RESERVED_LEARNER, value, now)

    def _submit_meta(self, net, var, value, now):
        p = self._proposer(var)
        if p.phase == MASTER:
            self.submit_value(net, value, now, var=var)
            return
        net.observe(self.node_id, "submitted", digest=value.digest(), var=var)
        self.queue.setdefault(var, []).append(value)
        if p.phase == IDLE:
            self._start_round(net, var)

    def _apply_meta(self, net, var, entry: Entry):
        if var == RESERVED_MEMBERS:
            if entry.iter + 1 in self.groups:
                return
            new = apply_membership(self.group, entry.value, entry.iter)
        elif var == RESERVED_LEARNER:
            new = apply_learner(self.group, entry.value)
            if self.groups.get(new.grpver) == new:
                return
        else:
            return
        self._adopt_group(net, new)

    def _adopt_group(self, net, g: GroupConfig):
        self.groups[g.grpver] = g
        if g.grpver >= self.group.grpver:
            self.group = g
            # a sitting master moves its fan-out to the new member set;
            # adjacent configurations differ by one member, so any new
            # majority still intersects every old accept quorum
            for p in self.proposers.values():
                if p.phase == MASTER:
                    p.round_grp = g
            net.observe(
                self.node_id,
                "membership_applied",
                grpver=g.grpver,
                members=list(g.member_ids()),
                learner=g.learner_target,
            )
        if (
            self.cfg.mode == GROUP
            and ACCEPTOR in self.cfg.roles
            and self.cfg.id in g.member_ids()
        ):
            net.subscribe(self.node_id, f"/{g.grp}/v{g.grpver}")

    # -- learn plumbing ------------------------------------------------------------------

    def _is_learner_target(self) -> bool:
        return LEARNER in self.cfg.roles and self.cfg.prefix == self.group.learner_target

    def _report_learn(self, net, var, entry: Entry):
        """Acceptor side: tell the learner target about one accepted slot."""
        payload, ballot = learner_aggregate([entry], self.group.grpver)
        payload = Learn(payload.entries, payload.grpver, response_target=self.cfg.prefix)
        if self.cfg.mode == INDIVIDUAL:
            # the name's ballot id is the reporter, not the round winner:
            # reports from different acceptors must not share a name, or the
            # Pit would aggregate them and one ack would satisfy them all
            mine = BallotNumber(ballot.n, self.node_id, priority=ballot.priority)
            name = self._iname(self.group.learner_target, var, LEARN, mine, entry.iter)
            msg = Message(INTEREST, name, payload)
        else:
            name = self._gname(var, LEARN, ballot, entry.iter)
            msg = Message(PUSH, name, payload, to_target=self.group.learner_target)
        self._send_reliable(net, msg, lambda net, p, f, now: True)

    def _broadcast_learned(self, net, var, learned_now, grp):
        """Learner side: announce fresh facts to members and observers."""
        payload, ballot = learner_aggregate(learned_now, grp.grpver)
        payload = Learn(payload.entries, payload.grpver, response_target=self.cfg.prefix)
        targets = {m.prefix for m in grp.members}
        targets.update(self.notify_prefixes)
        if var == RESERVED_MEMBERS:
            # joining acceptors must hear the membership fact that seats them
            for entry in learned_now:
                new = apply_membership(grp, entry.value, entry.iter)
                targets.update(m.prefix for m in new.members)
        targets.discard(self.cfg.prefix)
        it = learned_now[0].iter if len(learned_now) == 1 else None
        for prefix in sorted(targets):
            if self.cfg.mode == INDIVIDUAL:
                name = self._iname(prefix, var, LEARN, ballot, it)
                msg = Message(INTEREST, name, payload)
            else:
                name = self._gname(var, LEARN, ballot, it)
                msg = Message(PUSH, name, payload, to_target=prefix)
            self._send_reliable(net, msg, lambda net, p, f, now: True)

    def _handle_learn(self, net, msg, name_obj, payload, now):
        var = name_obj.var
        if self._is_learner_target():
            grp = self.groups.get(payload.grpver)
            if grp is None:
                net.observe(
                    self.node_id, "unknown_grpver", name=msg.name, grpver=payload.grpver
                )
                self._respond_learn(net, msg, ok=False)
                return
            from_id = grp.prefix_to_id().get(payload.response_target)
            lrn = self._learner(var)
            if from_id is None:
                learned_now = []  # not a member of that configuration: no vote
            else:
                lrn, learned_now, _ = learner_on_learn(lrn, from_id, payload.entries, grp)
            for entry in learned_now:
                net.observe(
                    self.node_id,
                    "learned",
                    digest=entry.value.digest(),
                    var=var,
                    iter=entry.iter,
                    grpver=grp.grpver,
                )
                self._note_master(net, entry.iter, entry.value)
                self._apply_meta(net, var, entry)
            self._respond_learn(net, msg, ok=True)
            if learned_now:
                self._broadcast_learned(net, var, learned_now, grp)
        else:
            lrn = self._learner(var)
            lrn, fresh = learner_ingest(lrn, payload.entries)
            for entry in fresh:
                net.observe(
                    self.node_id,
                    "ingested",
                    digest=entry.value.digest(),
                    var=var,
                    iter=entry.iter,
                )
                self._note_master(net, entry.iter, entry.value)
                self._apply_meta(net, var, entry)
            self._respond_learn(net, msg, ok=True)

    def _respond_learn(self, net, msg, ok):
        body = (
            Ack(response_target=self.cfg.prefix)
            if ok
            else Nack(response_target=self.cfg.prefix)
        )
        if msg.kind == INTEREST:
            net.submit(self.node_id, Message(CONTENT_OBJECT, msg.name, body))
        elif msg.to_target == self.cfg.prefix:
            # targeted learn wants a PushAck; fanned-out announcements do not
            net.submit(
                self.node_id,
                Message(PUSH_ACK, msg.name, body, to_target=msg.payload.response_target),
            )

    def _note_master(self, net, it, value: Value):
        """Track election outcomes (descriptor link values).

        The election winner is the descriptor chosen at the lowest iter;
        that rule is a pure function of the agreed log, so every node
        settles on the same master no matter in which order it hears
        about slots.
        """
        if value.kind != LINK or not value.data.endswith(b"/descriptor"):
            return
        if value == self.descriptor:
            self._descriptor_settled = True
        if self._election is None or it < self._election[0]:
            self._election = (it, value)
        winner = self._election[1]
        if winner == self.descriptor:
            self.master_hint = self.cfg.prefix
            return
        self.master_hint = winner.data.decode()[: -len("/descriptor")]
        if self.contending and not self.follower:
            self.follower = True
            self._step_down(net, self.var)

    def _step_down(self, net, var):
        """Drop any mastery or round in progress after losing an election."""
        p = self.proposers.get(var)
        if p is None or p.phase == IDLE:
            return
        p.phase = IDLE
        p.ballot = None
        p.promises = {}
        p.pending = {}
        self._drop_round_keys(var)
        for slot_key in [k for k in self._accept_keys if k[0] == var]:
            for key in self._accept_keys.pop(slot_key):
                self._cancel(key)
        net.observe(self.node_id, "stepped_down", var=var)

    # -- dispatch ---------------------------------------------------------------------------

    def on_message(self, net, msg, now):
        kind = msg.kind
        if kind == CONTENT_OBJECT:
            self._feed_response(net, (msg.name, ""), msg.payload, None, now)
        elif kind == INTEREST:
            self._on_interest(net, msg, now)
        elif kind == PUSH:
            self._on_push(net, msg, now)
        else:  # push_ack: the acker's identity picks out the unicast exchange
            target = getattr(msg.payload, "response_target", None)
            self._feed_response(net, (msg.name, target or ""), msg.payload, None, now)

    def _parse(self, msg, scheme):
        cached = msg.__dict__.get("_name_obj")
        if cached is None:
            cached = parse_name(msg.name, scheme)
            msg.__dict__["_name_obj"] = cached
        return cached

    def _on_interest(self, net, msg, now):
        try:
            name_obj = self._parse(msg, INDIVIDUAL)
        except Exception:
            net.observe(self.node_id, "bad_name", name=msg.name)
            return
        verb = name_obj.verb
        if not isinstance(msg.payload, _EXPECTED_REQUEST[verb]):
            net.observe(self.node_id, "bad_verb_payload", name=msg.name)
            net.submit(
                self.node_id,
                Message(CONTENT_OBJECT, msg.name, Nack(response_target=self.cfg.prefix)),
            )
            return
        if verb == READ:
            self._serve_read(net, msg, name_obj)
        elif verb == LEARN:
            self._handle_learn(net, msg, name_obj, msg.payload, now)
        elif ACCEPTOR not in self.cfg.roles:
            net.observe(self.node_id, "ignored", name=msg.name)
        elif verb == PREPARE:
            acc = self._acceptor(name_obj.var)
            acc, resp = acceptor_on_prepare(acc, name_obj.ballot, name_obj.iter or 0)
            resp = PrepareResp(
                resp.ack, resp.current_max, resp.prior, response_target=self.cfg.prefix
            )
            net.submit(self.node_id, Message(CONTENT_OBJECT, msg.name, resp))
        else:  # accept
            acc = self._acceptor(name_obj.var)
            acc, resp, notif = acceptor_on_accept(
                acc, name_obj.ballot, name_obj.iter or 0, msg.payload.value
            )
            resp = AcceptResp(resp.ack, resp.current_max, response_target=self.cfg.prefix)
            net.submit(self.node_id, Message(CONTENT_OBJECT, msg.name, resp))
            if notif is not None:
                self._report_learn(net, name_obj.var, notif.entry)

    def _serve_read(self, net, msg, name_obj):
        p = self.proposers.get(name_obj.var)
        if p is None or p.phase != MASTER:
            net.observe(
                self.node_id, "read_redirect", name=msg.name, hint=self.master_hint
            )
            body = Nack(response_target=self.cfg.prefix)
        else:
            body = proposer_on_read(p, name_obj.ballot, name_obj.iter)
            if isinstance(body, ReadResp):
                body = ReadResp(body.found, response_target=self.cfg.prefix)
            else:
                body = Nack(response_target=self.cfg.prefix)
        net.submit(
            self.node_id,
            Message(CONTENT_OBJECT, msg.name, body, max_age_ms=self.read_max_age_ms),
        )

    def _on_push(self, net, msg, now):
        payload = msg.payload
        if isinstance(payload, (PrepareResp, AcceptResp)):
            # unicast answer to one of our group-name requests
            from_id = None
            target = getattr(payload, "response_target", None)
            if target is not None:
                for grp in self.groups.values():
                    from_id = grp.prefix_to_id().get(target)
                    if from_id is not None:
                        break
            self._feed_response(net, (msg.name, ""), payload, from_id, now)
            return
        if isinstance(payload, (Nack, Ack)):
            self._feed_response(net, (msg.name, ""), payload, None, now)
            return
        try:
            name_obj = self._parse(msg, GROUP)
        except Exception:
            net.observe(self.node_id, "bad_name", name=msg.name)
            return
        verb = name_obj.verb
        if not isinstance(payload, _EXPECTED_REQUEST.get(verb, ReadReq)):
            net.observe(self.node_id, "bad_verb_payload", name=msg.name)
            return
        if verb == LEARN:
            self._handle_learn(net, msg, name_obj, payload, now)
            return
        if ACCEPTOR not in self.cfg.roles:
            net.observe(self.node_id, "ignored", name=msg.name)
            return
        if verb == PREPARE:
            acc = self._acceptor(name_obj.var)
            acc, resp = acceptor_on_prepare(acc, name_obj.ballot, name_obj.iter or 0)
            resp = PrepareResp(
                resp.ack, resp.current_max, resp.prior, response_target=self.cfg.prefix
            )
            net.submit(
                self.node_id,
                Message(PUSH, msg.name, resp, to_target=payload.response_target),
            )
        elif verb == ACCEPT:
            acc = self._acceptor(name_obj.var)
            acc, resp, notif = acceptor_on_accept(
                acc, name_obj.ballot, name_obj.iter or 0, payload.value
            )
            resp = AcceptResp(resp.ack, resp.current_max, response_target=self.cfg.prefix)
            net.submit(
                self.node_id,
                Message(PUSH, msg.name, resp, to_target=payload.response_target),
            )
            if notif is not None:
                self._report_learn(net, name_obj.var, notif.entry)

"""Basic/Multi-Paxos role state machines: acceptor, proposer, learner.

Every operation is a deterministic transition (state, input) -> (state,
outputs) with no hidden clocks or I/O; message construction and routing
live in the node layer.  Instances are single-threaded by contract.

The proposer exposes the Multi-Paxos master fast path: one prepare round,
then any number of accept rounds at increasing iters.  Phase-1 promises
report every already-accepted slot, and entering the master phase forces
re-proposal of the highest-ballot prior per slot before fresh values or
no-op fills are admitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import NotIdle, NotMaster, ProtocolError
from .group import GroupConfig, Member
from .naming import BallotNumber
from .wire import (
    AcceptResp,
    Entry,
    Learn,
    Nack,
    PrepareResp,
    ReadResp,
    Value,
)
from .errors import EmptyAggregate

GroupKey = tuple[str, str, str]

IDLE = "idle"
PREPARING = "preparing"
MASTER = "master"


# --- acceptor ---------------------------------------------------------------

@dataclass
class AcceptorState:
    """Per-variable acceptor: promised ballot and accepted slot log.

    `log` records every state change so persistence can be layered on and
    so tests can replay transitions to assert promised never decreases.
    """

    group_key: GroupKey
    promised: BallotNumber | None = None
    accepted: dict[int, tuple[BallotNumber, Value]] = field(default_factory=dict)
    log: list[tuple] = field(default_factory=list)


@dataclass(frozen=True)
class LearnNotification:
    """An accepted slot the acceptor must report to the learner target."""

    entry: Entry


def acceptor_on_prepare(
    s: AcceptorState, n: BallotNumber, iter: int = 0
) -> tuple[AcceptorState, PrepareResp]:
    """Promise n if it exceeds the current promise, else deny.

    An ack reports every accepted slot at or above the requested iter so
    the proposer can re-propose them.
    """
    if s.promised is None or n > s.promised:
        s.promised = n
        s.log.append(("promise", n))
        prior = tuple(
            Entry(b, i, v) for i, (b, v) in sorted(s.accepted.items()) if i >= iter
        )
        return s, PrepareResp(True, n, prior)
    return s, PrepareResp(False, s.promised)


def acceptor_on_accept(
    s: AcceptorState, n: BallotNumber, iter: int, v: Value
) -> tuple[AcceptorState, AcceptResp, LearnNotification | None]:
    """Accept (n, iter, v) unless a higher ballot was promised.

    Accepting emits a LearnNotification for the node layer to address to
    the current learner target.
    """
    if s.promised is None or n >= s.promised:
        s.promised = n
        s.accepted[iter] = (n, v)
        s.log.append(("accept", n, iter, v))
        return s, AcceptResp(True, n), LearnNotification(Entry(n, iter, v))
    return s, AcceptResp(False, s.promised), None


# --- proposer ---------------------------------------------------------------

@dataclass
class PendingSlot:
    value: Value
    ballot: BallotNumber
    acks: set[str] = field(default_factory=set)
    noop_fill: bool = False


@dataclass
class ProposerState:
    my_id: str
    group_key: GroupKey
    priority: int | None = None
    phase: str = IDLE
    ballot: BallotNumber | None = None
    next_iter: int = 0
    max_seen_n: int = 0
    chosen: dict[int, tuple[BallotNumber, Value]] = field(default_factory=dict)
    forced: dict[int, Entry] = field(default_factory=dict)
    pending: dict[int, PendingSlot] = field(default_factory=dict)
    promises: dict[str, PrepareResp] = field(default_factory=dict)
    round_grp: GroupConfig | None = None

    def observe_ballot(self, n: BallotNumber):
        if n.n > self.max_seen_n:
            self.max_seen_n = n.n

    def record_chosen(self, it: int, ballot: BallotNumber, value: Value):
        """Install a confirmed slot; a conflicting overwrite is a protocol bug."""
        old = self.chosen.get(it)
        if old is not None and old[1] != value:
            raise ProtocolError(
                f"chosen value for iter {it} of {self.group_key} changed: "
                f"{old[1]!r} -> {value!r}"
            )
        self.chosen[it] = (ballot, value)
        if it >= self.next_iter:
            self.next_iter = it + 1
        self.observe_ballot(ballot)


@dataclass(frozen=True)
class AcceptSend:
    member: Member
    iter: int
    ballot: BallotNumber
    value: Value


@dataclass(frozen=True)
class Phase2Start:
    """Master entry: slots whose priors must be re-proposed come first."""

    ballot: BallotNumber
    reproposals: tuple[AcceptSend, ...]


@dataclass(frozen=True)
class ChosenEvent:
    iter: int
    ballot: BallotNumber
    value: Value
    ack_count: int
    grpver: int


def proposer_start_round(
    s: ProposerState, grp: GroupConfig
) -> tuple[ProposerState, list[tuple[Member, BallotNumber]]]:
    """Pick the next ballot and prepare against every member of grp.

    Sending to all members is trivially at least a majority; loss decides
    who actually answers.
    """
    if s.phase != IDLE:
        raise NotIdle(f"proposer {s.my_id} already in phase {s.phase}")
    n = BallotNumber(s.max_seen_n + 1, s.my_id, priority=s.priority)
    s.max_seen_n = n.n
    s.phase = PREPARING
    s.ballot = n
    s.promises = {}
    s.forced = {}
    s.round_grp = grp
    return s, [(m, n) for m in grp.members]


def proposer_on_promise(
    s: ProposerState, from_id: str, r: PrepareResp, grp: GroupConfig
) -> tuple[ProposerState, Phase2Start | None]:
    """Tally one prepare response for the current round.

    On majority: become master, adopt the highest-ballot prior per slot as
    a forced re-proposal, and leave fresh slots free for any value.  A deny
    above the round ballot abandons the round (phase returns to idle).
    """
    if s.phase != PREPARING:
        return s, None  # stale response for a finished round
    if not r.ack:
        s.observe_ballot(r.current_max)
        if r.current_max > s.ballot:
            s.phase = IDLE
            s.ballot = None
            s.promises = {}
        return s, None
    if from_id not in grp.member_ids():
        return s, None
    s.promises[from_id] = r
    if len(s.promises) < grp.majority:
        return s, None

    s.phase = MASTER
    for resp in s.promises.values():
        for entry in resp.prior:
            cur = s.forced.get(entry.iter)
            if cur is None or entry.ballot > cur.ballot:
                s.forced[entry.iter] = entry
    claimed = [*s.forced, *s.chosen]
    if claimed:
        s.next_iter = max(s.next_iter, max(claimed) + 1)

    sends = []
    for it in sorted(s.forced):
        if it in s.chosen:
            continue
        entry = s.forced[it]
        s.pending[it] = PendingSlot(entry.value, s.ballot)
        sends += [AcceptSend(m, it, s.ballot, entry.value) for m in s.round_grp.members]
    return s, Phase2Start(s.ballot, tuple(sends))


def proposer_submit(
    s: ProposerState, v: Value
) -> tuple[ProposerState, list[AcceptSend]]:
    """Assign the next iter to v and emit accepts to the round's members."""
    if s.phase != MASTER:
        raise NotMaster(f"proposer {s.my_id} is {s.phase}, not master")
    it = s.next_iter
    s.next_iter += 1
    s.pending[it] = PendingSlot(v, s.ballot)
    return s, [AcceptSend(m, it, s.ballot, v) for m in s.round_grp.members]


def proposer_fill_noops(
    s: ProposerState, up_to_iter: int
) -> tuple[ProposerState, list[AcceptSend]]:
    """Propose no-ops for every unclaimed slot below up_to_iter."""
    if s.phase != MASTER:
        raise NotMaster(f"proposer {s.my_id} is {s.phase}, not master")
    sends = []
    noop = Value.noop()
    for it in range(up_to_iter):
        if it in s.chosen or it in s.pending:
            continue
        s.pending[it] = PendingSlot(noop, s.ballot, noop_fill=True)
        sends += [AcceptSend(m, it, s.ballot, noop) for m in s.round_grp.members]
    return s, sends


def proposer_on_accept_resp(
    s: ProposerState, from_id: str, it: int, r: AcceptResp
) -> tuple[ProposerState, ChosenEvent | None]:
    """Tally one accept response; majority confirms the slot as chosen."""
    if s.phase != MASTER:
        return s, None
    if not r.ack:
        s.observe_ballot(r.current_max)
        if r.current_max > s.ballot:
            # preempted by a higher round: stop submitting
            s.phase = IDLE
            s.ballot = None
            s.pending = {}
        return s, None
    slot = s.pending.get(it)
    if slot is None or from_id not in s.round_grp.member_ids():
        return s, None
    slot.acks.add(from_id)
    if len(slot.acks) < s.round_grp.majority:
        return s, None
    s.record_chosen(it, slot.ballot, slot.value)
    acks = len(slot.acks)
    del s.pending[it]
    return s, ChosenEvent(it, slot.ballot, slot.value, acks, s.round_grp.grpver)


def proposer_on_read(
    s: ProposerState, ballot: BallotNumber | None = None, iter: int | None = None
) -> ReadResp | Nack:
    """Serve a read from the chosen log.

    A Nack means indeterminate state; a chosen no-op is a definite answer
    and is returned as a normal entry.  An unconstrained read returns the
    whole known log, which may be empty.
    """
    if iter is not None:
        got = s.chosen.get(iter)
        if got is None:
            return Nack()
        b, v = got
        if ballot is not None and b != ballot:
            return Nack()
        return ReadResp((Entry(b, iter, v),))
    entries = tuple(
        Entry(b, it, v) for it, (b, v) in sorted(s.chosen.items())
        if ballot is None or b == ballot
    )
    if ballot is not None and not entries:
        return Nack()
    return ReadResp(entries)


# --- learner ----------------------------------------------------------------

@dataclass
class LearnerState:
    group_key: GroupKey
    # (iter, ballot, value-digest) -> reporting acceptor ids
    tallies: dict[tuple[int, BallotNumber, str], set[str]] = field(default_factory=dict)
    # same key -> (grpver of the round, the value itself)
    tally_meta: dict[tuple[int, BallotNumber, str], tuple[int, Value]] = field(default_factory=dict)
    learned: dict[int, tuple[BallotNumber, Value]] = field(default_factory=dict)
    grpver_in_use: int = 1

    def record_learned(self, it: int, ballot: BallotNumber, value: Value):
        """Install a learned slot; learned entries are immutable once set."""
        old = self.learned.get(it)
        if old is not None:
            if old[1] != value:
                raise ProtocolError(
                    f"learned value for iter {it} of {self.group_key} changed: "
                    f"{old[1]!r} -> {value!r}"
                )
            return False
        self.learned[it] = (ballot, value)
        return True


def learner_on_learn(
    s: LearnerState, from_id: str, entries: tuple[Entry, ...], grp: GroupConfig
) -> tuple[LearnerState, list[Entry], tuple[Member, ...]]:
    """Tally acceptor reports; majority of grp's members learns a slot.

    Duplicate reports are idempotent (set semantics) and reports from
    non-members of grp are ignored.  Returns the newly learned entries and
    the members to notify; the node layer adds proposers and builds the
    actual messages.
    """
    learned_now: list[Entry] = []
    if from_id not in grp.member_ids():
        return s, learned_now, ()
    for entry in entries:
        if entry.iter in s.learned:
            continue
        key = (entry.iter, entry.ballot, entry.value.digest())
        tally = s.tallies.get(key)
        if tally is None:
            tally = s.tallies[key] = set()
            s.tally_meta[key] = (grp.grpver, entry.value)
        tally.add(from_id)
        if len(tally) >= grp.majority:
            if s.record_learned(entry.iter, entry.ballot, entry.value):
                learned_now.append(entry)
    return s, learned_now, grp.members if learned_now else ()


def learner_ingest(
    s: LearnerState, entries: tuple[Entry, ...]
) -> tuple[LearnerState, list[Entry]]:
    """Adopt slots announced by the designated learner as facts."""
    fresh = [e for e in entries if s.record_learned(e.iter, e.ballot, e.value)]
    return s, fresh


def learner_aggregate(
    entries: list[Entry] | tuple[Entry, ...], grpver: int
) -> tuple[Learn, BallotNumber]:
    """Bundle entries into one Learn payload.

    The returned ballot is the maximum over the entries and names the
    aggregate message.
    """
    if not entries:
        raise EmptyAggregate("cannot aggregate zero entries")
    payload = Learn(tuple(entries), grpver)
    top = payload.entries[0].ballot
    for e in payload.entries[1:]:
        if e.ballot > top:
            top = e.ballot
    return payload, top

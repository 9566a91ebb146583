"""Deterministic discrete-event simulator for named-data messaging.

The network is a set of endpoints (protocol nodes) attached to forwarders.
Every message routes by its name: each forwarder holds a Fib mapping name
prefixes to faces, a Pit recording where Interests came from so Content
Objects can retrace them, and a ContentStore caching Content Objects for
their MaxAge.  Pushes route forward-only and may fan out; they never touch
the Pit or the cache.

All randomness (hop delays, loss, duplication) comes from one seeded
generator, so a run is a pure function of its configuration and the
endpoint logic.  The trace is a flat list of tuples; ``trace_to_jsonl``
renders the documented JSON-lines form.
"""

from __future__ import annotations

import heapq
import itertools
import json
import random
from dataclasses import dataclass, field

from .errors import LivelockGuard, SimError
from .wire import INTEREST, CONTENT_OBJECT, Message

__all__ = [
    "SimConfig",
    "Fib",
    "Pit",
    "ContentStore",
    "Forwarder",
    "Network",
    "TraceLine",
    "trace_to_jsonl",
]

# Event kinds inside the heap.  Deliveries carry (to, frm, msg); timers
# carry (node_id, tag).
_EV_DELIVER = 0
_EV_TIMER = 1

# A trace line is (t, kind, frm, to, name, digest, extra) with extra a
# dict or None.  Tuples keep the hot path cheap; rendering is lazy.
TraceLine = tuple


@dataclass(frozen=True)
class SimConfig:
    """Knobs for one simulation run.

    delay_ms bounds are inclusive and apply per hop.  loss_prob and
    dup_prob apply once per submission, at the origin hop only; internal
    forwarder hops never lose or duplicate.
    """

    seed: int = 0
    delay_ms: tuple[int, int] = (1, 5)
    loss_prob: float = 0.0
    dup_prob: float = 0.0
    default_max_age_ms: int = 0
    pit_lifetime_ms: int = 4000
    livelock_cap: int = 1_000_000

    def __post_init__(self) -> None:
        lo, hi = self.delay_ms
        if lo < 0 or hi < lo:
            raise SimError(f"bad delay bounds {self.delay_ms!r}")
        for p, label in ((self.loss_prob, "loss_prob"), (self.dup_prob, "dup_prob")):
            if not 0.0 <= p <= 1.0:
                raise SimError(f"{label} outside [0, 1]: {p!r}")
        if self.pit_lifetime_ms <= 0 or self.livelock_cap <= 0:
            raise SimError("pit_lifetime_ms and livelock_cap must be positive")


def _components(name: str) -> tuple:
    # "/a/b/c" -> ("a", "b", "c"); names are validated upstream.
    return tuple(name.split("/")[1:])


class Fib:
    """Longest-prefix name table mapping prefixes to sets of faces."""

    def __init__(self) -> None:
        self._table: dict[tuple, set] = {}

    def add(self, prefix: str, face: str) -> None:
        self._table.setdefault(_components(prefix), set()).add(face)

    def remove(self, prefix: str, face: str) -> None:
        key = _components(prefix)
        faces = self._table.get(key)
        if faces is None:
            return
        faces.discard(face)
        if not faces:
            del self._table[key]

    def match(self, comps: tuple) -> frozenset:
        """Faces of the longest registered prefix of comps, or empty."""
        table = self._table
        for i in range(len(comps), 0, -1):
            faces = table.get(comps[:i])
            if faces:
                return frozenset(faces)
        return frozenset()


class Pit:
    """Pending Interest table: name -> list of (face, expiry_ms)."""

    def __init__(self, lifetime_ms: int) -> None:
        self.lifetime_ms = lifetime_ms
        self._table: dict[str, list] = {}

    def record(self, name: str, face: str, now: int) -> bool:
        """Note an Interest arrival.  True if it needs forwarding upstream
        (no live entry existed), False if aggregated onto a pending one."""
        entry = self._table.get(name)
        expiry = now + self.lifetime_ms
        if entry is None:
            self._table[name] = [(face, expiry)]
            return True
        live = [fe for fe in entry if fe[1] > now]
        fresh = not live
        live = [fe for fe in live if fe[0] != face]
        live.append((face, expiry))
        self._table[name] = live
        return fresh

    def consume(self, name: str, now: int) -> list:
        """Pop and return the live faces waiting on name (empty if none)."""
        entry = self._table.pop(name, None)
        if entry is None:
            return []
        return [face for face, expiry in entry if expiry > now]


class ContentStore:
    """Name-keyed cache of Content Objects honouring per-object MaxAge."""

    def __init__(self) -> None:
        self._table: dict[str, tuple] = {}

    def put(self, msg: Message, now: int) -> None:
        if msg.max_age_ms > 0:
            self._table[msg.name] = (msg, now, now + msg.max_age_ms)

    def get(self, name: str, now: int):
        """(message, stored_at) for a fresh entry, else None."""
        hit = self._table.get(name)
        if hit is None:
            return None
        msg, stored_at, expiry = hit
        if now >= expiry:
            del self._table[name]
            return None
        return msg, stored_at


@dataclass
class Forwarder:
    fid: str
    fib: Fib = field(default_factory=Fib)
    pit: Pit = None  # type: ignore[assignment]
    cs: ContentStore = field(default_factory=ContentStore)


class Network:
    """Event loop, fault model, topology, and trace for one run.

    Endpoints are objects with ``on_message(net, msg, now)`` and
    ``on_timer(net, tag, now)``; they talk back through ``submit``,
    ``set_timer``, and ``observe``.  The default topology is a star
    through one forwarder; extra forwarders can be added and wired with
    explicit Fib entries.
    """

    def __init__(self, config: SimConfig | None = None) -> None:
        self.config = config or SimConfig()
        self.rng = random.Random(self.config.seed)
        self.now = 0
        self.trace: list = []
        self._queue: list = []
        self._seq = itertools.count()
        self._events_done = 0
        self._nodes: dict[str, object] = {}
        self._node_forwarder: dict[str, str] = {}
        self._down: set = set()
        self._forwarders: dict[str, Forwarder] = {}
        self._topo_logged = False
        self.add_forwarder("fwd0")

    # -- topology ---------------------------------------------------------

    def add_forwarder(self, fid: str) -> Forwarder:
        if fid in self._forwarders or fid in self._nodes:
            raise SimError(f"duplicate entity id {fid!r}")
        fwd = Forwarder(fid)
        fwd.pit = Pit(self.config.pit_lifetime_ms)
        self._forwarders[fid] = fwd
        return fwd

    def attach(self, node_id: str, handler, prefixes=(), forwarder: str = "fwd0") -> None:
        """Register an endpoint and advertise its prefixes on its forwarder."""
        if node_id in self._nodes or node_id in self._forwarders:
            raise SimError(f"duplicate entity id {node_id!r}")
        if forwarder not in self._forwarders:
            raise SimError(f"no forwarder {forwarder!r}")
        self._nodes[node_id] = handler
        self._node_forwarder[node_id] = forwarder
        for prefix in prefixes:
            self.subscribe(node_id, prefix)

    def subscribe(self, node_id: str, prefix: str) -> None:
        self._forwarders[self._node_forwarder[node_id]].fib.add(prefix, node_id)

    def unsubscribe(self, node_id: str, prefix: str) -> None:
        self._forwarders[self._node_forwarder[node_id]].fib.remove(prefix, node_id)

    def pause(self, node_id: str) -> None:
        """Take a node off the network; deliveries and timers are dropped."""
        self._down.add(node_id)

    def resume(self, node_id: str) -> None:
        self._down.discard(node_id)
        handler = self._nodes[node_id]
        hook = getattr(handler, "on_resume", None)
        if hook is not None:
            hook(self, self.now)

    def is_down(self, node_id: str) -> bool:
        return node_id in self._down

    # -- endpoint API ------------------------------------------------------

    def submit(self, node_id: str, msg: Message) -> None:
        """Send a message from a node into the network.

        The fault model rolls once here: the submission may be lost or
        duplicated.  Copies that survive travel to the node's forwarder
        after an independent per-hop delay each.
        """
        cfg = self.config
        fwd = self._node_forwarder[node_id]
        roll = self.rng.random
        if cfg.loss_prob > 0.0 and roll() < cfg.loss_prob:
            self._log("drop_loss", node_id, fwd, msg.name, _digest(msg))
            return
        self._hop(node_id, fwd, msg)
        if cfg.dup_prob > 0.0 and roll() < cfg.dup_prob:
            self._hop(node_id, fwd, msg, dup=True)

    def set_timer(self, node_id: str, delay_ms: int, tag) -> None:
        if delay_ms < 0:
            raise SimError(f"negative timer delay {delay_ms!r}")
        heapq.heappush(
            self._queue,
            (self.now + delay_ms, next(self._seq), _EV_TIMER, (node_id, tag)),
        )

    def observe(self, node_id: str, kind: str, name: str = "", digest: str = "", **extra) -> None:
        """Record a protocol-level event (chosen, learned, ...) in the trace."""
        self._log(kind, node_id, "", name, digest, extra or None)

    # -- event loop --------------------------------------------------------

    def run(self, until: int | None = None) -> None:
        """Process events in time order until the queue drains.

        With until set, stops before the first event later than it.  Raises
        LivelockGuard when the configured event cap is exceeded.
        """
        if not self._topo_logged:
            self._topo_logged = True
            self._log(
                "topology",
                "",
                "",
                "",
                "",
                {"forwarders": sorted(self._forwarders), "nodes": sorted(self._nodes)},
            )
        queue = self._queue
        cap = self.config.livelock_cap
        while queue:
            if until is not None and queue[0][0] > until:
                return
            self._events_done += 1
            if self._events_done > cap:
                raise LivelockGuard(f"exceeded {cap} events at t={self.now}")
            t, _, ev, data = heapq.heappop(queue)
            self.now = t
            if ev == _EV_TIMER:
                node_id, tag = data
                if node_id in self._down:
                    continue
                self._nodes[node_id].on_timer(self, tag, t)
            else:
                to, frm, msg = data
                self._arrive(to, frm, msg)

    # -- internals ---------------------------------------------------------

    def _log(self, kind, frm, to, name, digest, extra=None) -> None:
        self.trace.append((self.now, kind, frm, to, name, digest, extra))

    def _hop(self, frm: str, to: str, msg: Message, dup: bool = False, extra=None) -> None:
        """Schedule one hop delivery and trace it at send time."""
        lo, hi = self.config.delay_ms
        delay = lo if lo == hi else self.rng.randint(lo, hi)
        if dup:
            self._log("dup", frm, to, msg.name, _digest(msg), {"of": msg.kind})
        else:
            self._log(msg.kind, frm, to, msg.name, _digest(msg), extra)
        heapq.heappush(
            self._queue,
            (self.now + delay, next(self._seq), _EV_DELIVER, (to, frm, msg)),
        )

    def _arrive(self, to: str, frm: str, msg: Message) -> None:
        fwd = self._forwarders.get(to)
        if fwd is not None:
            self._forward(fwd, frm, msg)
            return
        if to in self._down:
            self._log("node_down", frm, to, msg.name, _digest(msg))
            return
        self._nodes[to].on_message(self, msg, self.now)

    def _forward(self, fwd: Forwarder, frm: str, msg: Message) -> None:
        kind = msg.kind
        name = msg.name
        now = self.now
        # the arrival face is pruned only for forwarder peers: that prevents
        # loops between forwarders while a node keeps the right to reach its
        # own prefix through the star (self-addressed exchanges are legal)
        if kind == INTEREST:
            hit = fwd.cs.get(name, now)
            if hit is not None:
                cached, stored_at = hit
                self._hop(
                    fwd.fid,
                    frm,
                    cached,
                    extra={
                        "cache_hit": True,
                        "stored_at": stored_at,
                        "max_age_ms": cached.max_age_ms,
                    },
                )
                return
            faces = fwd.fib.match(_components(name))
            if frm in self._forwarders:
                faces = faces - {frm}
            if not faces:
                self._log("no_route", fwd.fid, "", name, _digest(msg))
                return
            if not fwd.pit.record(name, frm, now):
                self._log("pit_aggregated", frm, fwd.fid, name, _digest(msg))
                return
            for face in sorted(faces):
                self._hop(fwd.fid, face, msg)
        elif kind == CONTENT_OBJECT:
            faces = fwd.pit.consume(name, now)
            if not faces:
                self._log("content_dropped", frm, fwd.fid, name, _digest(msg))
                return
            fwd.cs.put(msg, now)
            for face in faces:
                self._hop(fwd.fid, face, msg)
        else:  # PUSH and PUSH_ACK route forward-only, fanning out on demand
            route = msg.to_target or name
            faces = fwd.fib.match(_components(route))
            if frm in self._forwarders:
                faces = faces - {frm}
            if not faces:
                self._log("no_subscribers", fwd.fid, "", name, _digest(msg))
                return
            for face in sorted(faces):
                self._hop(fwd.fid, face, msg)


def _digest(msg: Message) -> str:
    return msg.digest()


def trace_to_jsonl(trace) -> "list[str]":
    """Render trace tuples as the documented JSON-lines records."""
    out = []
    for t, kind, frm, to, name, digest, extra in trace:
        record = {"t": t, "kind": kind, "from": frm, "to": to, "name": name, "payload_digest": digest}
        if extra:
            record.update(extra)
        out.append(json.dumps(record, sort_keys=True))
    return out

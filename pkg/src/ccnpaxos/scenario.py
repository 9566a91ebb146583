"""Declarative scenario files: a cluster, a network, and a timed workload.

A scenario JSON object describes the nodes, the initial acceptor group,
the network parameters, and a list of timed actions.  ``load_scenario``
validates aggressively and raises ScenarioError with a message that names
the offending field, so a typo in a hand-written file fails loudly
instead of silently running a different experiment.

``run_scenario`` builds the cluster, replays the workload from inside the
event loop through a driver pseudo-node, runs to quiescence (or to the
horizon) and returns the trace plus a JSON-ready summary.

Actions may address a node by id or by the reserved name "master", which
resolves to whichever node currently holds mastery.  When no master
exists yet the driver re-queues the action a while and eventually drops
it with an ``action_dropped`` trace line.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConsensusError, ScenarioError
from .group import GroupConfig, Member
from .naming import GROUP, INDIVIDUAL
from .netsim import Network, SimConfig
from .node import ACCEPTOR, LEARNER, PROPOSER, ROLES, NodeConfig, Server
from .wire import Value

__all__ = [
    "Action",
    "Scenario",
    "RunResult",
    "load_scenario",
    "scenario_from_dict",
    "with_overrides",
    "build",
    "run_scenario",
    "summarize",
    "bundled_path",
    "bundled_names",
    "load_bundled",
    "DRIVER_ID",
    "MODE_NAMES",
]

# External mode spellings; internally nodes use the naming-scheme constants.
MODES = {"individual": INDIVIDUAL, "multicast": GROUP}
MODE_NAMES = {v: k for k, v in MODES.items()}

DRIVER_ID = "drv"
MASTER_ALIAS = "master"

_WIRE_KINDS = frozenset(("interest", "content_object", "push", "push_ack", "dup"))


@dataclass(frozen=True)
class Action:
    """One timed workload step."""

    t: int
    kind: str
    args: dict


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str
    network: SimConfig
    nodes: tuple
    group: GroupConfig
    workload: tuple
    horizon: "int | None" = None


# --- strict dict parsing ----------------------------------------------------------

_MISSING = object()


def _pop(d: dict, key: str, where: str, types=None, default=_MISSING):
    if key in d:
        v = d.pop(key)
    elif default is not _MISSING:
        return default
    else:
        raise ScenarioError(f"{where}: missing required field {key!r}")
    if types is not None and (not isinstance(v, types) or isinstance(v, bool)):
        want = types[0].__name__ if isinstance(types, tuple) else types.__name__
        raise ScenarioError(f"{where}: field {key!r} must be a {want}, got {v!r}")
    return v


def _done(d: dict, where: str) -> None:
    if d:
        raise ScenarioError(f"{where}: unknown fields {sorted(d)}")


def _network(d: dict) -> SimConfig:
    where = "network"
    delay = _pop(d, "delay_ms", where, list, default=[1, 5])
    if len(delay) != 2 or not all(isinstance(x, int) and not isinstance(x, bool) for x in delay):
        raise ScenarioError(f"{where}: delay_ms must be a [lo, hi] pair of integers")
    kw = {
        "seed": _pop(d, "seed", where, int, default=0),
        "delay_ms": tuple(delay),
        "loss_prob": float(_pop(d, "loss_prob", where, (int, float), default=0.0)),
        "dup_prob": float(_pop(d, "dup_prob", where, (int, float), default=0.0)),
        "default_max_age_ms": _pop(d, "default_max_age_ms", where, int, default=0),
        "pit_lifetime_ms": _pop(d, "pit_lifetime_ms", where, int, default=4000),
        "livelock_cap": _pop(d, "livelock_cap", where, int, default=1_000_000),
    }
    _done(d, where)
    try:
        return SimConfig(**kw)
    except (ValueError, ConsensusError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _node(d: dict, idx: int, mode: str) -> NodeConfig:
    where = f"nodes[{idx}]"
    nid = _pop(d, "id", where, str)
    prefix = _pop(d, "prefix", where, str)
    roles = _pop(d, "roles", where, list, default=sorted(ROLES))
    for r in roles:
        if r not in ROLES:
            raise ScenarioError(f"{where}: unknown role {r!r} (valid: {sorted(ROLES)})")
    priority = _pop(d, "priority", where, default=None)
    if priority is not None and (not isinstance(priority, int) or isinstance(priority, bool)):
        raise ScenarioError(f"{where}: priority must be an integer or null")
    retry = _pop(d, "retry", where, list, default=None)
    kw = {}
    if retry is not None:
        if len(retry) != 2 or not all(isinstance(x, int) and not isinstance(x, bool) for x in retry):
            raise ScenarioError(f"{where}: retry must be [attempts, backoff_ms]")
        kw["retry"] = tuple(retry)
    _done(d, where)
    try:
        return NodeConfig(
            nid, prefix, roles=frozenset(roles), mode=mode, priority=priority, **kw
        )
    except ConsensusError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _group(d: dict, by_id: dict) -> GroupConfig:
    where = "group"
    grp = _pop(d, "grp", where, str, default="g")
    member_ids = _pop(d, "members", where, list)
    learner = _pop(d, "learner", where, str, default=None)
    _done(d, where)
    members = []
    for mid in member_ids:
        cfg = by_id.get(mid)
        if cfg is None:
            raise ScenarioError(f"{where}: member {mid!r} is not a declared node")
        if ACCEPTOR not in cfg.roles:
            raise ScenarioError(f"{where}: member {mid!r} lacks the acceptor role")
        members.append(Member(cfg.id, cfg.prefix))
    if learner is None:
        # default to the first member that can tally
        for m in members:
            if LEARNER in by_id[m.id].roles:
                learner = m.prefix
                break
        else:
            raise ScenarioError(f"{where}: no member has the learner role; set 'learner'")
    elif not learner.startswith("/"):
        cfg = by_id.get(learner)
        if cfg is None:
            raise ScenarioError(f"{where}: learner {learner!r} is not a declared node")
        if LEARNER not in cfg.roles:
            raise ScenarioError(f"{where}: learner {learner!r} lacks the learner role")
        learner = cfg.prefix
    try:
        return GroupConfig(grp, 0, tuple(members), learner)
    except ConsensusError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


# Per action kind: (required arg names, optional arg names).  "node" accepts
# the master alias where noted; validation of that happens in _action.
_ACTION_ARGS = {
    "elect": (("node",), ()),
    "propose": (("node", "value"), ("var",)),
    "read": (("node", "target"), ("iter", "var")),
    "add_member": (("node", "id", "prefix"), ()),
    "remove_member": (("node", "id"), ()),
    "change_learner": (("node", "target"), ()),
    "crash": (("node",), ()),
    "restart": (("node",), ()),
    "skip_slot": (("node",), ("var",)),
    "fill_noops": (("node", "up_to_iter"), ("var",)),
}

# actions where "node" / "target" may be the master alias
_ALIAS_OK = frozenset(("propose", "read", "skip_slot", "fill_noops", "change_learner"))
# actions whose node must be a real, attached node
_CONCRETE_NODE = frozenset(("elect", "crash", "restart", "add_member", "remove_member", "change_learner", "read"))


def _action(d: dict, idx: int, by_id: dict) -> Action:
    where = f"workload[{idx}]"
    t = _pop(d, "t", where, int)
    if t < 0:
        raise ScenarioError(f"{where}: t must be >= 0, got {t}")
    kind = _pop(d, "action", where, str)
    spec = _ACTION_ARGS.get(kind)
    if spec is None:
        raise ScenarioError(f"{where}: unknown action {kind!r} (valid: {sorted(_ACTION_ARGS)})")
    required, optional = spec
    args = {}
    for key in required:
        args[key] = _pop(d, key, where)
    for key in optional:
        if key in d:
            args[key] = d.pop(key)
    _done(d, where)

    node = args.get("node")
    if not isinstance(node, str):
        raise ScenarioError(f"{where}: node must be a string")
    if node == MASTER_ALIAS:
        if kind in _CONCRETE_NODE:
            raise ScenarioError(f"{where}: action {kind!r} needs a concrete node id")
    elif node not in by_id:
        raise ScenarioError(f"{where}: unknown node {node!r}")

    target = args.get("target")
    if target is not None and target != MASTER_ALIAS and not target.startswith("/"):
        if target not in by_id:
            raise ScenarioError(f"{where}: unknown target {target!r}")
    if kind == "read":
        it = args.get("iter")
        if it is not None and (not isinstance(it, int) or isinstance(it, bool) or it < 0):
            raise ScenarioError(f"{where}: iter must be a non-negative integer")
        # an iter-constrained read borrows the target's ballot, so the
        # target must be a node we can ask, not an arbitrary prefix
        if it is not None and isinstance(target, str) and target.startswith("/"):
            if not any(c.prefix == target for c in by_id.values()):
                raise ScenarioError(f"{where}: iter read needs a declared node as target")
    if kind == "propose" and not isinstance(args.get("value"), str):
        raise ScenarioError(f"{where}: value must be a string")
    if kind == "fill_noops":
        upto = args["up_to_iter"]
        if not isinstance(upto, int) or isinstance(upto, bool) or upto < 0:
            raise ScenarioError(f"{where}: up_to_iter must be a non-negative integer")
    if kind == "add_member":
        new = args["id"]
        if new not in by_id:
            raise ScenarioError(f"{where}: added member {new!r} is not a declared node")
        if by_id[new].prefix != args["prefix"]:
            raise ScenarioError(
                f"{where}: prefix {args['prefix']!r} does not match node {new!r}"
            )
    return Action(t, kind, args)


def scenario_from_dict(data) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario: expected a JSON object at top level")
    d = dict(data)
    name = _pop(d, "name", "scenario", str)
    mode_s = _pop(d, "mode", "scenario", str, default="individual")
    if mode_s not in MODES:
        raise ScenarioError(f"scenario: mode must be one of {sorted(MODES)}, got {mode_s!r}")
    mode = MODES[mode_s]
    net_d = _pop(d, "network", "scenario", dict, default={})
    nodes_l = _pop(d, "nodes", "scenario", list)
    group_d = _pop(d, "group", "scenario", dict)
    workload_l = _pop(d, "workload", "scenario", list, default=[])
    horizon = _pop(d, "horizon", "scenario", default=None)
    if horizon is not None and (not isinstance(horizon, int) or isinstance(horizon, bool)):
        raise ScenarioError("scenario: horizon must be an integer or null")
    _done(d, "scenario")

    network = _network(dict(net_d))
    if not nodes_l:
        raise ScenarioError("nodes: at least one node is required")
    nodes = []
    by_id = {}
    prefixes = set()
    for i, nd in enumerate(nodes_l):
        if not isinstance(nd, dict):
            raise ScenarioError(f"nodes[{i}]: expected an object")
        cfg = _node(dict(nd), i, mode)
        if cfg.id in by_id:
            raise ScenarioError(f"nodes[{i}]: duplicate node id {cfg.id!r}")
        if cfg.id in (MASTER_ALIAS, DRIVER_ID):
            raise ScenarioError(f"nodes[{i}]: node id {cfg.id!r} is reserved")
        if cfg.prefix in prefixes:
            raise ScenarioError(f"nodes[{i}]: duplicate prefix {cfg.prefix!r}")
        by_id[cfg.id] = cfg
        prefixes.add(cfg.prefix)
        nodes.append(cfg)

    with_prio = [n.id for n in nodes if PROPOSER in n.roles and n.priority is not None]
    without = [n.id for n in nodes if PROPOSER in n.roles and n.priority is None]
    if with_prio and without:
        raise ScenarioError(
            f"nodes: ballot forms cannot mix; {with_prio} carry a priority but {without} do not"
        )

    group = _group(dict(group_d), by_id)

    workload = []
    last_t = 0
    for i, ad in enumerate(workload_l):
        if not isinstance(ad, dict):
            raise ScenarioError(f"workload[{i}]: expected an object")
        act = _action(dict(ad), i, by_id)
        if act.t < last_t:
            raise ScenarioError(
                f"workload[{i}]: t={act.t} goes back in time (previous was {last_t})"
            )
        last_t = act.t
        workload.append(act)

    return Scenario(name, mode, network, tuple(nodes), group, tuple(workload), horizon)


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file, raising ScenarioError on any flaw."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    try:
        return scenario_from_dict(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def with_overrides(scenario: Scenario, mode=None, seed=None, loss=None) -> Scenario:
    """Apply command-line overrides, returning a new scenario."""
    network = scenario.network
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if loss is not None:
        if not 0.0 <= loss < 1.0:
            raise ScenarioError(f"loss must be in [0, 1), got {loss}")
        changes["loss_prob"] = loss
    if changes:
        network = dataclasses.replace(network, **changes)
    m = scenario.mode
    nodes = scenario.nodes
    if mode is not None:
        if mode not in MODES:
            raise ScenarioError(f"mode must be one of {sorted(MODES)}, got {mode!r}")
        m = MODES[mode]
        nodes = tuple(dataclasses.replace(n, mode=m) for n in nodes)
    return dataclasses.replace(scenario, network=network, mode=m, nodes=nodes)


# --- execution --------------------------------------------------------------------


class Driver:
    """Pseudo-node that replays the workload from inside the event loop.

    Actions addressed to "master" wait for one to exist: the action is
    re-queued every RETRY_MS and dropped (with a trace line) after
    MAX_TRIES attempts, so a scenario whose election never settles still
    terminates.  The budget is sized for elections crawling through
    retry backoffs at heavy loss.
    """

    RETRY_MS = 200
    MAX_TRIES = 150

    def __init__(self, scenario: Scenario, servers: dict):
        self.scenario = scenario
        self.servers = servers
        self.by_prefix = {s.cfg.prefix: s for s in servers.values()}
        self.dropped: list[int] = []

    def on_message(self, net, msg, now):
        pass

    def on_timer(self, net, tag, now):
        if tag[0] != "act":
            return
        _, idx, tries = tag
        act = self.scenario.workload[idx]
        if self._apply(net, act, now):
            return
        if tries + 1 >= self.MAX_TRIES:
            self.dropped.append(idx)
            net.observe(DRIVER_ID, "action_dropped", action=act.kind, index=idx)
        else:
            net.set_timer(DRIVER_ID, self.RETRY_MS, ("act", idx, tries + 1))

    # -- resolution ------------------------------------------------------

    def _master(self, var):
        for nid in sorted(self.servers):
            if self.servers[nid].is_master(var):
                return self.servers[nid]
        return None

    def _server(self, spec, var):
        if spec == MASTER_ALIAS:
            return self._master(var)
        return self.servers[spec]

    def _prefix(self, spec, var):
        if spec.startswith("/"):
            return spec
        srv = self._server(spec, var)
        return None if srv is None else srv.cfg.prefix

    # -- dispatch ----------------------------------------------------------

    def _apply(self, net, act: Action, now) -> bool:
        """Run one action; False means "no master yet, ask again later"."""
        a = act.args
        kind = act.kind
        var = a.get("var")
        if kind == "elect":
            self.servers[a["node"]].contend(net, now)
            return True
        if kind == "propose":
            srv = self._server(a["node"], var)
            if srv is None:
                return False
            srv.submit_value(net, Value.opaque(a["value"].encode("utf-8")), now, var=var)
            return True
        if kind == "read":
            srv = self.servers[a["node"]]
            target = self._prefix(a["target"], var)
            if target is None:
                return False
            it = a.get("iter")
            ballot = None
            if it is not None:
                owner = self.by_prefix.get(target)
                ballot = None if owner is None else owner.current_ballot(var)
                if ballot is None:
                    return False  # target has no round yet; read would be unnameable
            srv.send_read(net, target, ballot=ballot, iter=it, var=var)
            return True
        if kind == "add_member":
            self.servers[a["node"]].change_membership(
                net, now, add=Member(a["id"], a["prefix"])
            )
            return True
        if kind == "remove_member":
            self.servers[a["node"]].change_membership(net, now, remove=a["id"])
            return True
        if kind == "change_learner":
            target = self._prefix(a["target"], None)
            if target is None:
                return False
            self.servers[a["node"]].change_learner(net, now, target)
            return True
        if kind == "crash":
            net.pause(a["node"])
            return True
        if kind == "restart":
            net.resume(a["node"])
            return True
        if kind == "skip_slot":
            srv = self._server(a["node"], var)
            if srv is None or not srv.is_master(var):
                return False
            srv.skip_slot(net, var=var)
            return True
        if kind == "fill_noops":
            srv = self._server(a["node"], var)
            if srv is None or not srv.is_master(var):
                return False
            srv.fill_noops(net, a["up_to_iter"], now, var=var)
            return True
        raise ScenarioError(f"unhandled action {kind!r}")


def build(scenario: Scenario):
    """Instantiate the network, servers, and workload driver."""
    net = Network(scenario.network)
    servers = {}
    prop_prefixes = [n.prefix for n in scenario.nodes if PROPOSER in n.roles]
    for cfg in scenario.nodes:
        srv = Server(
            cfg, scenario.group, read_max_age_ms=scenario.network.default_max_age_ms
        )
        srv.notify_prefixes = list(prop_prefixes)
        servers[cfg.id] = srv
        net.attach(cfg.id, srv, prefixes=(cfg.prefix,))
    if scenario.mode == GROUP:
        base = f"/{scenario.group.grp}/v{scenario.group.grpver}"
        for m in scenario.group.members:
            net.subscribe(m.id, base)
    driver = Driver(scenario, servers)
    net.attach(DRIVER_ID, driver)
    for i, act in enumerate(scenario.workload):
        net.set_timer(DRIVER_ID, act.t, ("act", i, 0))
    return net, servers, driver


@dataclass
class RunResult:
    scenario: Scenario
    net: Network
    servers: dict
    driver: Driver
    summary: dict

    @property
    def trace(self):
        return self.net.trace


def run_scenario(scenario: Scenario) -> RunResult:
    net, servers, driver = build(scenario)
    net.run(until=scenario.horizon)
    summary = summarize(scenario, net, servers, driver)
    return RunResult(scenario, net, servers, driver, summary)


def summarize(scenario: Scenario, net, servers, driver=None) -> dict:
    """JSON-ready digest of one run: who leads, what settled, what it cost."""
    messages = {}
    chosen_slots = set()
    for _, kind, _, _, _, _, extra in net.trace:
        if kind in _WIRE_KINDS:
            messages[kind] = messages.get(kind, 0) + 1
        elif kind == "chosen":
            chosen_slots.add((extra["var"], extra["iter"]))
    masters = [nid for nid in sorted(servers) if servers[nid].is_master()]
    return {
        "scenario": scenario.name,
        "mode": MODE_NAMES[scenario.mode],
        "seed": scenario.network.seed,
        "master": masters[0] if masters else None,
        "chosen_slots": len(chosen_slots),
        "messages": messages,
        "events": len(net.trace),
        "dropped_actions": 0 if driver is None else len(driver.dropped),
        "nodes": [servers[nid].snapshot() for nid in sorted(servers)],
    }


# --- bundled scenarios --------------------------------------------------------------


def bundled_dir() -> Path:
    return Path(__file__).resolve().parent / "scenarios"


def bundled_names() -> "list[str]":
    return sorted(p.stem for p in bundled_dir().glob("*.json"))


def bundled_path(name: str) -> Path:
    p = bundled_dir() / f"{name}.json"
    if not p.exists():
        raise ScenarioError(f"no bundled scenario {name!r} (have: {bundled_names()})")
    return p


def load_bundled(name: str) -> Scenario:
    return load_scenario(bundled_path(name))

"""Exhaustive bounded search over a small two-proposer consensus model.

One step is either a complete prepare round against an adversarially chosen
acceptor subset, or a batch of accept deliveries to such a subset.  Message
loss, duplication, and reordering are all expressed through the subset
choice and through step interleaving, so enumerating every step sequence
enumerates every network behavior the model distinguishes.  A value counts
as chosen the moment a majority of acceptors simultaneously hold the same
(ballot, value); the chosen flags are sticky, and a state whose two flags
are both set is an agreement violation.

States pack into one small integer:

    bits  0..32  three acceptors, 11 bits each: promised(5) acc_ballot(5) acc_value(1)
    bits 33..46  two proposers, 7 bits each: master(1) ballot(5) value(1)
    bits 47..50  next unused ballot counter n
    bits 51..52  sticky chosen flags, one per value

Ballots encode as n*2 + proposer_id (0 means none), which orders them
exactly as (n, id) tuples.  Two canonicalizations shrink the visited set:
acceptors are interchangeable, so their fields are kept sorted, and the two
value labels are interchangeable, so each state is stored as the smaller of
itself and its value-swapped mirror.
"""

from __future__ import annotations

from typing import NamedTuple

HIGHEST = 0  # re-propose the prior with the largest ballot
LOWEST = 1  # deliberately wrong twin used to show the rule matters

_P_OFF = 33
_N_OFF = 47
_C_OFF = 51
_MAX_N = 15

# step codes: kind(1) | proposer(1) | subset(3) | value-branch(1)
PREPARE_STEP = 0
ACCEPT_STEP = 1


class SearchResult(NamedTuple):
    states: int
    violations: int
    depth: int


def step_code(kind: int, proposer: int, subset: int, value: int = 0) -> int:
    return kind | proposer << 1 | subset << 2 | value << 5


def render_step(code: int) -> str:
    kind = code & 1
    p = code >> 1 & 1
    subset = code >> 2 & 7
    v = code >> 5 & 1
    members = ",".join(f"a{i}" for i in range(3) if subset >> i & 1)
    if kind == PREPARE_STEP:
        return f"prepare p{p} -> {{{members}}} (free value {v})"
    return f"accept p{p} -> {{{members}}}"


def _flip_values(st: int) -> int:
    flipped = 0
    for i in range(3):
        a = st >> (11 * i) & 0x7FF
        if a >> 5 & 31:  # only meaningful when something was accepted
            a ^= 1 << 10
        flipped |= a << (11 * i)
    for j in range(2):
        pj = st >> (_P_OFF + 7 * j) & 0x7F
        if pj & 1:
            pj ^= 1 << 6
        flipped |= pj << (_P_OFF + 7 * j)
    flipped |= st & (15 << _N_OFF)
    chosen = st >> _C_OFF & 3
    flipped |= (chosen >> 1 | (chosen & 1) << 1) << _C_OFF
    return flipped


def _canon(a0: int, a1: int, a2: int, rest: int) -> int:
    if a0 > a1:
        a0, a1 = a1, a0
    if a1 > a2:
        a1, a2 = a2, a1
    if a0 > a1:
        a0, a1 = a1, a0
    st = a0 | a1 << 11 | a2 << 22 | rest
    alt = _flip_values(st)
    if alt < st:
        # re-sort acceptors, the value flip can reorder equal-ballot fields
        b0 = alt & 0x7FF
        b1 = alt >> 11 & 0x7FF
        b2 = alt >> 22 & 0x7FF
        if b0 > b1:
            b0, b1 = b1, b0
        if b1 > b2:
            b1, b2 = b2, b1
        if b0 > b1:
            b0, b1 = b1, b0
        alt = b0 | b1 << 11 | b2 << 22 | (alt >> _P_OFF << _P_OFF)
        return alt if alt < st else st
    return st


def initial_state() -> int:
    return 1 << _N_OFF


def expand(st: int, rule: int, out: list[tuple[int, int]], canonical: bool = True):
    """Append every (successor, step_code) of st to out.

    canonical=False keeps acceptor positions and value labels literal,
    which scripted replays need; the search always canonicalizes.
    """
    canon = _canon if canonical else (lambda a0, a1, a2, rest: a0 | a1 << 11 | a2 << 22 | rest)
    a = (st & 0x7FF, st >> 11 & 0x7FF, st >> 22 & 0x7FF)
    prom = (a[0] & 31, a[1] & 31, a[2] & 31)
    pj = (st >> _P_OFF & 0x7F, st >> (_P_OFF + 7) & 0x7F)
    next_n = st >> _N_OFF & 15
    chosen = st >> _C_OFF & 3
    keep = pj[0] << _P_OFF | pj[1] << (_P_OFF + 7) | next_n << _N_OFF | chosen << _C_OFF

    if next_n <= _MAX_N:
        bumped = next_n + 1 << _N_OFF | chosen << _C_OFF
        for p in (0, 1):
            b = next_n * 2 + p
            other = pj[1 - p] << (_P_OFF + 7 * (1 - p))
            for subset in range(1, 8):
                ackmask = 0
                for i in range(3):
                    if subset >> i & 1 and b > prom[i]:
                        ackmask |= 1 << i
                if ackmask == 0:
                    continue  # all denied: nothing changes anywhere
                na = [a[0], a[1], a[2]]
                hi_b = -1
                hi_v = 0
                lo_b = 1 << 9
                lo_v = 0
                got_prior = False
                for i in range(3):
                    if ackmask >> i & 1:
                        na[i] = a[i] & ~31 | b
                        ab = a[i] >> 5 & 31
                        if ab:
                            got_prior = True
                            av = a[i] >> 10 & 1
                            if ab > hi_b:
                                hi_b, hi_v = ab, av
                            if ab < lo_b:
                                lo_b, lo_v = ab, av
                if ackmask.bit_count() >= 2:
                    if got_prior:
                        v = hi_v if rule == HIGHEST else lo_v
                        me = (1 | b << 1 | v << 6) << (_P_OFF + 7 * p)
                        out.append((
                            canon(na[0], na[1], na[2], me | other | bumped),
                            step_code(PREPARE_STEP, p, subset, v),
                        ))
                    else:
                        for v in (0, 1):
                            me = (1 | b << 1 | v << 6) << (_P_OFF + 7 * p)
                            out.append((
                                canon(na[0], na[1], na[2], me | other | bumped),
                                step_code(PREPARE_STEP, p, subset, v),
                            ))
                else:
                    # below majority: promises stick, the round dies
                    me = 0 << (_P_OFF + 7 * p)
                    out.append((
                        canon(na[0], na[1], na[2], me | other | bumped),
                        step_code(PREPARE_STEP, p, subset),
                    ))

    for p in (0, 1):
        if not pj[p] & 1:
            continue
        b = pj[p] >> 1 & 31
        v = pj[p] >> 6 & 1
        acc_field = b << 5 | v << 10 | b  # promised=b, accepted=(b,v)
        want = b | v << 5
        for subset in range(1, 8):
            na = [a[0], a[1], a[2]]
            changed = False
            for i in range(3):
                if subset >> i & 1 and b >= prom[i] and na[i] != acc_field:
                    na[i] = acc_field
                    changed = True
            if not changed:
                continue
            holders = 0
            for i in range(3):
                if na[i] >> 5 == want:
                    holders += 1
            nch = chosen | 1 << v if holders >= 2 else chosen
            rest = keep & ~(3 << _C_OFF) | nch << _C_OFF
            out.append((
                canon(na[0], na[1], na[2], rest),
                step_code(ACCEPT_STEP, p, subset),
            ))


def search(rule: int, max_steps: int = 8, stop_on_first: bool = False) -> SearchResult:
    """Breadth-first enumeration of every state within max_steps.

    Returns the visited-state count, the number of distinct states whose
    two chosen flags are both set, and the depth actually reached.
    """
    init = initial_state()
    visited = {init}
    frontier = [init]
    violations = 0
    depth = 0
    succ: list[tuple[int, int]] = []
    for depth in range(1, max_steps + 1):
        nxt = []
        for st in frontier:
            succ.clear()
            expand(st, rule, succ)
            for s, _code in succ:
                if s in visited:
                    continue
                visited.add(s)
                nxt.append(s)
                if s >> _C_OFF & 3 == 3:
                    violations += 1
                    if stop_on_first:
                        return SearchResult(len(visited), violations, depth)
        if not nxt:
            return SearchResult(len(visited), violations, depth)
        frontier = nxt
    return SearchResult(len(visited), violations, depth)


def replay(codes, rule: int) -> tuple[int, list[str]]:
    """Apply a scripted step sequence; returns (final state, transcript).

    Raises ValueError if a scripted step is not enabled in the current
    state, so scripts stay honest about what the model allows.
    """
    st = initial_state()
    lines = []
    succ: list[tuple[int, int]] = []
    for code in codes:
        succ.clear()
        expand(st, rule, succ, canonical=False)
        # the value bit only disambiguates free choices; a forced
        # re-proposal matches on (kind, proposer, subset) alone
        cands = [(s, c) for s, c in succ if c & 0x1F == code & 0x1F]
        if not cands:
            raise ValueError(f"step {render_step(code)} is not enabled")
        if len(cands) > 1:
            cands = [(s, c) for s, c in cands if c == code]
        st, taken = cands[0]
        lines.append(f"{render_step(taken)}  chosen_flags={st >> _C_OFF & 3:02b}")
    return st, lines


def chosen_flags(st: int) -> int:
    return st >> _C_OFF & 3

"""Hierarchical consensus names and totally ordered ballot numbers.

Names are '/'-delimited UTF-8 path strings.  Two schemes exist:

* individual  /<prefix...>/<grp>/<prg>/<var>/<verb>[/<ballot>[/<iter>]]
* group       /<grp>/v<grpver>/<prg>/<var>/<verb>[/<ballot>[/<iter>]]

The ballot component is rendered "n.id" or "n.priority.id", which is why
'.' is banned from server identifiers.  The parser receives the scheme as
an explicit hint: a path like "/a/b/c/d/prepare/1.x" is ambiguous between a
one-component routable prefix and a group name, and the receiving face
always knows which schema it serves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    InvalidComponent,
    MalformedBallot,
    MalformedName,
    MixedBallotForms,
    UnknownVerb,
)

INDIVIDUAL = "individual"
GROUP = "group"
SCHEMES = (INDIVIDUAL, GROUP)

READ = "read"
PREPARE = "prepare"
ACCEPT = "accept"
LEARN = "learn"
VERBS = frozenset((READ, PREPARE, ACCEPT, LEARN))


def _check_component(text: str, what: str = "component") -> str:
    if not isinstance(text, str) or not text:
        raise InvalidComponent(f"{what} must be a non-empty string")
    if "/" in text:
        raise InvalidComponent(f"{what} {text!r} contains '/'")
    return text


def _parse_natural(text: str, what: str) -> int:
    # canonical decimal only: no sign, no leading zeros
    if not text.isdigit() or (len(text) > 1 and text[0] == "0"):
        raise MalformedName(f"{what} {text!r} is not a canonical natural number")
    return int(text)


@dataclass(frozen=True, slots=True)
class BallotNumber:
    """Proposal number: (n, id) or (n, priority, id), totally ordered.

    Ordering is lexicographic on the tuple; a larger priority wins at equal
    n.  Ballots with and without priority never compare against each other.
    """

    n: int
    id: str
    priority: int | None = field(default=None, kw_only=True)

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 0:
            raise InvalidComponent(f"ballot counter must be a natural number, got {self.n!r}")
        _check_component(self.id, "ballot id")
        if "." in self.id:
            raise InvalidComponent(f"ballot id {self.id!r} contains '.'")
        if self.priority is not None and (not isinstance(self.priority, int) or self.priority < 0):
            raise InvalidComponent(f"ballot priority must be a natural number, got {self.priority!r}")

    def key(self) -> tuple:
        if self.priority is None:
            return (self.n, self.id)
        return (self.n, self.priority, self.id)

    def encode(self) -> str:
        if self.priority is None:
            return f"{self.n}.{self.id}"
        return f"{self.n}.{self.priority}.{self.id}"

    @classmethod
    def parse(cls, text: str) -> "BallotNumber":
        parts = text.split(".")
        if len(parts) == 2:
            n_text, ident = parts
            prio_text = None
        elif len(parts) == 3:
            n_text, prio_text, ident = parts
        else:
            raise MalformedBallot(f"ballot {text!r} is not 'n.id' or 'n.priority.id'")
        if not ident:
            raise MalformedBallot(f"ballot {text!r} has an empty id")
        try:
            n = _parse_natural(n_text, "ballot counter")
            prio = None if prio_text is None else _parse_natural(prio_text, "ballot priority")
        except MalformedName as exc:
            raise MalformedBallot(str(exc)) from None
        return cls(n, ident, priority=prio)

    def _cmp_key(self, other: "BallotNumber") -> tuple:
        if (self.priority is None) != (other.priority is None):
            raise MixedBallotForms(
                f"cannot compare {self.encode()!r} with {other.encode()!r}: "
                "one carries a priority and the other does not"
            )
        return other.key()

    def __lt__(self, other):
        return self.key() < self._cmp_key(other)

    def __le__(self, other):
        return self.key() <= self._cmp_key(other)

    def __gt__(self, other):
        return self.key() > self._cmp_key(other)

    def __ge__(self, other):
        return self.key() >= self._cmp_key(other)


def compare_ballots(a: BallotNumber, b: BallotNumber) -> int:
    """Three-way comparison: negative, zero, or positive as a <, ==, > b.

    Raises MixedBallotForms when exactly one side carries a priority.
    """
    ka, kb = a.key(), a._cmp_key(b)
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


@dataclass(frozen=True, slots=True)
class ConsensusName:
    """Parsed consensus name for one read/prepare/accept/learn exchange."""

    scheme: str
    grp: str
    prg: str
    var: str
    verb: str
    prefix: tuple[str, ...] = ()
    grpver: int | None = None
    ballot: BallotNumber | None = None
    iter: int | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise MalformedName(f"unknown scheme {self.scheme!r}")
        if self.verb not in VERBS:
            raise UnknownVerb(f"unknown verb {self.verb!r}")
        for comp in (self.grp, self.prg, self.var):
            _check_component(comp)
        if self.scheme == INDIVIDUAL:
            if not self.prefix:
                raise MalformedName("individual names need a routable prefix")
            if self.grpver is not None:
                raise MalformedName("grpver is a group-scheme field")
            for comp in self.prefix:
                _check_component(comp, "prefix component")
        else:
            if self.prefix:
                raise MalformedName("group names carry no routable prefix")
            if not isinstance(self.grpver, int) or self.grpver < 0:
                raise MalformedName(f"group names need a natural grpver, got {self.grpver!r}")
            if self.verb == READ:
                raise MalformedName("read targets the proposer and is individual-scheme only")
        if self.verb != READ and self.ballot is None:
            raise MalformedName(f"{self.verb} names always carry a ballot")
        if self.iter is not None:
            if self.ballot is None:
                raise MalformedName("iter is only valid after a ballot")
            if not isinstance(self.iter, int) or self.iter < 0:
                raise MalformedName(f"iter must be a natural number, got {self.iter!r}")

    def encode(self) -> str:
        if self.scheme == INDIVIDUAL:
            comps = [*self.prefix, self.grp, self.prg, self.var]
        else:
            comps = [self.grp, f"v{self.grpver}", self.prg, self.var]
        comps.append(self.verb)
        if self.ballot is not None:
            comps.append(self.ballot.encode())
        if self.iter is not None:
            comps.append(str(self.iter))
        return "/" + "/".join(comps)

    @property
    def key(self) -> tuple[str, str, str]:
        """The (grp, prg, var) tuple identifying one consensus variable."""
        return (self.grp, self.prg, self.var)


def encode_name(name: ConsensusName) -> str:
    return name.encode()


def parse_name(path: str, scheme: str) -> ConsensusName:
    """Parse a path under the given scheme.  Inverse of encode_name.

    The verb is located scanning right-to-left so multi-component routable
    prefixes parse correctly; nothing after the verb but a ballot and an
    iter can look like a verb, so the rightmost verb token is the verb.
    """
    if scheme not in SCHEMES:
        raise MalformedName(f"unknown scheme {scheme!r}")
    if not isinstance(path, str) or not path.startswith("/"):
        raise MalformedName(f"name {path!r} does not start with '/'")
    comps = path[1:].split("/")
    if any(c == "" for c in comps):
        raise MalformedName(f"name {path!r} has an empty component")

    verb_at = -1
    for i in range(len(comps) - 1, -1, -1):
        if comps[i] in VERBS:
            verb_at = i
            break
    if verb_at < 0:
        raise UnknownVerb(f"no verb component in {path!r}")
    verb = comps[verb_at]

    tail = comps[verb_at + 1:]
    if len(tail) > 2:
        raise MalformedName(f"too many components after {verb!r} in {path!r}")
    ballot = BallotNumber.parse(tail[0]) if len(tail) >= 1 else None
    it = _parse_natural(tail[1], "iter") if len(tail) == 2 else None

    head = comps[:verb_at]
    if scheme == INDIVIDUAL:
        if len(head) < 4:
            raise MalformedName(f"individual name {path!r} is missing components")
        prefix = tuple(head[:-3])
        grp, prg, var = head[-3:]
        return ConsensusName(
            scheme=INDIVIDUAL, grp=grp, prg=prg, var=var, verb=verb,
            prefix=prefix, ballot=ballot, iter=it,
        )
    if len(head) != 4:
        raise MalformedName(f"group name {path!r} must have exactly grp/grpver/prg/var before the verb")
    grp, ver_text, prg, var = head
    if not ver_text.startswith("v"):
        raise MalformedName(f"grpver component {ver_text!r} must be 'v<digits>'")
    grpver = _parse_natural(ver_text[1:], "grpver")
    return ConsensusName(
        scheme=GROUP, grp=grp, prg=prg, var=var, verb=verb,
        grpver=grpver, ballot=ballot, iter=it,
    )

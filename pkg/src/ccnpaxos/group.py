"""Versioned acceptor membership and learner-target identity.

Membership and the learner target are themselves protected consensus
variables (reserved names "__acceptors" and "__learner").  A membership
value chosen at iter k yields grpver k+1, so versions are monotone without
a second counter; the bootstrap configuration is grpver 1, as if chosen at
iter 0.  Majorities are always judged against the member set of a specific
grpver, even when a newer version exists.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import (
    DuplicateMember,
    EmptyGroup,
    MalformedPayload,
    MalformedTarget,
    UnknownMember,
    WouldEmptyGroup,
)
from .wire import OPAQUE, Value

ACCEPTORS_VAR = "__acceptors"
LEARNER_VAR = "__learner"
MASTER_VAR = "master"
RESERVED_VARS = frozenset((ACCEPTORS_VAR, LEARNER_VAR))


class Member(NamedTuple):
    id: str
    prefix: str


def _check_prefix(prefix: str) -> str:
    if not isinstance(prefix, str) or not prefix.startswith("/") or prefix == "/":
        raise MalformedTarget(f"{prefix!r} is not a routable prefix")
    if any(c == "" for c in prefix[1:].split("/")):
        raise MalformedTarget(f"{prefix!r} has an empty component")
    return prefix


@dataclass(frozen=True)
class GroupConfig:
    """Immutable snapshot of one membership version."""

    grp: str
    grpver: int
    members: tuple[Member, ...]
    learner_target: str
    majority: int = field(init=False)

    def __post_init__(self):
        if not self.members:
            raise EmptyGroup(f"group {self.grp!r} has no members")
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise DuplicateMember(f"duplicate member ids in {ids}")
        for m in self.members:
            _check_prefix(m.prefix)
        _check_prefix(self.learner_target)
        object.__setattr__(self, "majority", len(self.members) // 2 + 1)

    def member_ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.members)

    def prefix_to_id(self) -> dict[str, str]:
        return {m.prefix: m.id for m in self.members}


def majority_size(g: GroupConfig) -> int:
    """floor(n/2) + 1 over the member set of this version."""
    if not g.members:
        raise EmptyGroup(f"group {g.grp!r} has no members")
    return len(g.members) // 2 + 1


@dataclass(frozen=True)
class Add:
    id: str
    prefix: str


@dataclass(frozen=True)
class Remove:
    id: str


_U16 = struct.Struct("<H")
_MEMBERSHIP_MAGIC = b"\x01M"
_LEARNER_MAGIC = b"\x01L"


def encode_membership(members: tuple[Member, ...]) -> Value:
    """Member-list sub-format: magic, u16 count, then (id, prefix) strings."""
    buf = bytearray(_MEMBERSHIP_MAGIC)
    buf += _U16.pack(len(members))
    for m in members:
        for text in (m.id, m.prefix):
            raw = text.encode("utf-8")
            buf += _U16.pack(len(raw))
            buf += raw
    return Value(OPAQUE, bytes(buf))


def decode_membership(value: Value) -> tuple[Member, ...]:
    data = value.data
    if value.kind != OPAQUE or data[:2] != _MEMBERSHIP_MAGIC:
        raise MalformedPayload("not a membership value")
    pos = 2
    try:
        (count,) = _U16.unpack_from(data, pos)
        pos += 2
        members = []
        for _ in range(count):
            fields = []
            for _ in range(2):
                (n,) = _U16.unpack_from(data, pos)
                pos += 2
                if pos + n > len(data):
                    raise MalformedPayload("truncated membership value")
                fields.append(data[pos:pos + n].decode("utf-8"))
                pos += n
            members.append(Member(*fields))
    except (struct.error, UnicodeDecodeError):
        raise MalformedPayload("truncated membership value") from None
    if pos != len(data):
        raise MalformedPayload("trailing bytes in membership value")
    return tuple(members)


def encode_learner_target(target: str) -> Value:
    return Value(OPAQUE, _LEARNER_MAGIC + target.encode("utf-8"))


def decode_learner_target(value: Value) -> str:
    if value.kind != OPAQUE or value.data[:2] != _LEARNER_MAGIC:
        raise MalformedPayload("not a learner-target value")
    try:
        return value.data[2:].decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedPayload("invalid utf-8 in learner-target value") from None


def propose_membership_change(current: GroupConfig, change: Add | Remove) -> Value:
    """Value for the "__acceptors" variable applying one add or remove.

    The value encodes the full resulting member list; choosing it at iter k
    creates grpver k+1.  The change takes effect for rounds started after a
    node learns it.
    """
    if isinstance(change, Add):
        if change.id in current.member_ids():
            raise DuplicateMember(f"member {change.id!r} already present")
        _check_prefix(change.prefix)
        members = current.members + (Member(change.id, change.prefix),)
    elif isinstance(change, Remove):
        if change.id not in current.member_ids():
            raise UnknownMember(f"member {change.id!r} not in group")
        if len(current.members) <= 1:
            raise WouldEmptyGroup("removal would leave zero members")
        members = tuple(m for m in current.members if m.id != change.id)
    else:
        raise TypeError(f"unknown change {change!r}")
    return encode_membership(members)


def propose_learner_change(current: GroupConfig, target: str) -> Value:
    """Value for the "__learner" variable switching notification target."""
    _check_prefix(target)
    return encode_learner_target(target)


def apply_membership(current: GroupConfig, value: Value, chosen_iter: int) -> GroupConfig:
    """Config created by a membership value chosen at the given iter."""
    members = decode_membership(value)
    return GroupConfig(current.grp, chosen_iter + 1, members, current.learner_target)


def apply_learner(current: GroupConfig, value: Value) -> GroupConfig:
    """Config with a new learner target; membership version is unchanged."""
    target = decode_learner_target(value)
    return GroupConfig(current.grp, current.grpver, current.members, target)

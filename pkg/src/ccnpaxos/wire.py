"""Typed message payloads and their canonical byte encoding.

One payload container with a variant tag, not per-verb wire formats: the
verb is already in the name, and the tag lets dispatch detect name/payload
mismatches (BadVerbPayload).  The encoding is deterministic, self-describing
and length-prefixed: integers are little-endian fixed width, variable fields
carry a u32 length, options carry a presence byte.  Frame layout:

    u8 version (0x01) | u8 tag | option<str> response_target | variant body

The decoder is total: any byte string outside the image of encode_payload
raises MalformedPayload, never anything else.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import NamedTuple, Union

from .errors import EmptyAggregate, MalformedPayload
from .naming import BallotNumber

WIRE_VERSION = 1

OPAQUE = "opaque"
LINK = "link"
NOOP = "noop"
_VALUE_KINDS = (OPAQUE, LINK, NOOP)

# message kinds (simulator-level, not serialized)
INTEREST = "interest"
CONTENT_OBJECT = "content_object"
PUSH = "push"
PUSH_ACK = "push_ack"


@dataclass(frozen=True)
class Value:
    """Consensus value: opaque bytes, a link to named content, or a no-op.

    A no-op is a chosen placeholder meaning "consensus that there is no
    value"; it is distinct from every opaque/link value, including empty
    opaque bytes.
    """

    kind: str
    data: bytes = b""

    def __post_init__(self):
        if self.kind not in _VALUE_KINDS:
            raise MalformedPayload(f"unknown value kind {self.kind!r}")
        if not isinstance(self.data, bytes):
            raise MalformedPayload("value data must be bytes")
        if self.kind == NOOP and self.data:
            raise MalformedPayload("a no-op value carries no bytes")

    @classmethod
    def opaque(cls, data: bytes) -> "Value":
        return cls(OPAQUE, data)

    @classmethod
    def link(cls, name: str) -> "Value":
        return cls(LINK, name.encode("utf-8"))

    @classmethod
    def noop(cls) -> "Value":
        return cls(NOOP)

    @property
    def is_noop(self) -> bool:
        return self.kind == NOOP

    def digest(self) -> str:
        h = hashlib.sha256(self.kind.encode() + b"\x00" + self.data)
        return h.hexdigest()[:16]


class Entry(NamedTuple):
    """One slot of a consensus log: (ballot, iter, value)."""

    ballot: BallotNumber
    iter: int
    value: Value


def _canonical_entries(entries, allow_empty: bool) -> tuple[Entry, ...]:
    out = tuple(sorted((Entry(*e) for e in entries), key=lambda e: e.iter))
    if not out and not allow_empty:
        raise EmptyAggregate("entry list must not be empty")
    iters = [e.iter for e in out]
    if len(set(iters)) != len(iters):
        raise MalformedPayload(f"duplicate iter in entries: {iters}")
    return out


@dataclass(frozen=True)
class PrepareReq:
    response_target: str | None = field(default=None, kw_only=True)


@dataclass(frozen=True)
class PrepareResp:
    ack: bool
    current_max: BallotNumber
    # every already-accepted slot at or above the requested iter, so a new
    # master can re-propose them; empty when nothing was accepted
    prior: tuple[Entry, ...] = ()
    response_target: str | None = field(default=None, kw_only=True)

    def __post_init__(self):
        object.__setattr__(self, "prior", _canonical_entries(self.prior, allow_empty=True))


@dataclass(frozen=True)
class AcceptReq:
    value: Value
    response_target: str | None = field(default=None, kw_only=True)


@dataclass(frozen=True)
class AcceptResp:
    ack: bool
    current_max: BallotNumber
    response_target: str | None = field(default=None, kw_only=True)


@dataclass(frozen=True)
class Learn:
    entries: tuple[Entry, ...]
    grpver: int
    response_target: str | None = field(default=None, kw_only=True)

    def __post_init__(self):
        object.__setattr__(self, "entries", _canonical_entries(self.entries, allow_empty=False))
        if not isinstance(self.grpver, int) or self.grpver < 0:
            raise MalformedPayload(f"grpver must be a natural number, got {self.grpver!r}")


@dataclass(frozen=True)
class ReadReq:
    response_target: str | None = field(default=None, kw_only=True)


@dataclass(frozen=True)
class ReadResp:
    found: tuple[Entry, ...] = ()
    response_target: str | None = field(default=None, kw_only=True)

    def __post_init__(self):
        object.__setattr__(self, "found", _canonical_entries(self.found, allow_empty=True))


@dataclass(frozen=True)
class Nack:
    response_target: str | None = field(default=None, kw_only=True)


@dataclass(frozen=True)
class Ack:
    """Bare acknowledgement body for learn messages and push ACKs."""

    response_target: str | None = field(default=None, kw_only=True)


Payload = Union[
    PrepareReq, PrepareResp, AcceptReq, AcceptResp,
    Learn, ReadReq, ReadResp, Nack, Ack,
]

_TAGS = {
    PrepareReq: 1, PrepareResp: 2, AcceptReq: 3, AcceptResp: 4,
    Learn: 5, ReadReq: 6, ReadResp: 7, Nack: 8, Ack: 9,
}
_BY_TAG = {tag: cls for cls, tag in _TAGS.items()}

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class _Writer:
    __slots__ = ("buf",)

    def __init__(self):
        self.buf = bytearray()

    def u8(self, v: int):
        self.buf.append(v)

    def u32(self, v: int):
        self.buf += _U32.pack(v)

    def u64(self, v: int):
        self.buf += _U64.pack(v)

    def raw(self, b: bytes):
        self.u32(len(b))
        self.buf += b

    def text(self, s: str):
        self.raw(s.encode("utf-8"))

    def opt_text(self, s: str | None):
        if s is None:
            self.u8(0)
        else:
            self.u8(1)
            self.text(s)

    def ballot(self, b: BallotNumber):
        self.u64(b.n)
        if b.priority is None:
            self.u8(0)
        else:
            self.u8(1)
            self.u64(b.priority)
        self.text(b.id)

    def value(self, v: Value):
        self.u8(_VALUE_KINDS.index(v.kind))
        self.raw(v.data)

    def entry(self, e: Entry):
        self.ballot(e.ballot)
        self.u64(e.iter)
        self.value(e.value)

    def entries(self, es: tuple[Entry, ...]):
        self.u32(len(es))
        for e in es:
            self.entry(e)


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if n < 0 or end > len(self.data):
            raise MalformedPayload("truncated payload")
        out = self.data[self.pos:end]
        self.pos = end
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def raw(self) -> bytes:
        return self.take(self.u32())

    def text(self) -> str:
        try:
            return self.raw().decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedPayload("invalid utf-8 in payload") from None

    def flag(self) -> bool:
        v = self.u8()
        if v > 1:
            raise MalformedPayload(f"flag byte must be 0 or 1, got {v}")
        return bool(v)

    def opt_text(self) -> str | None:
        return self.text() if self.flag() else None

    def ballot(self) -> BallotNumber:
        n = self.u64()
        prio = self.u64() if self.flag() else None
        ident = self.text()
        try:
            return BallotNumber(n, ident, priority=prio)
        except Exception:
            raise MalformedPayload("invalid ballot in payload") from None

    def value(self) -> Value:
        kind = self.u8()
        if kind >= len(_VALUE_KINDS):
            raise MalformedPayload(f"unknown value kind byte {kind}")
        data = self.raw()
        return Value(_VALUE_KINDS[kind], data)

    def entry(self) -> Entry:
        b = self.ballot()
        it = self.u64()
        return Entry(b, it, self.value())

    def entries(self) -> tuple[Entry, ...]:
        n = self.u32()
        if n > len(self.data):  # count cannot exceed remaining bytes
            raise MalformedPayload("entry count exceeds payload size")
        return tuple(self.entry() for _ in range(n))


def encode_payload(p: Payload) -> bytes:
    """Canonical bytes for a payload; equal payloads encode equal bytes."""
    cached = p.__dict__.get("_encoded")
    if cached is not None:
        return cached
    tag = _TAGS.get(type(p))
    if tag is None:
        raise MalformedPayload(f"not a payload: {type(p).__name__}")
    w = _Writer()
    w.u8(WIRE_VERSION)
    w.u8(tag)
    w.opt_text(p.response_target)
    if isinstance(p, PrepareResp):
        w.u8(1 if p.ack else 0)
        w.ballot(p.current_max)
        w.entries(p.prior)
    elif isinstance(p, AcceptReq):
        w.value(p.value)
    elif isinstance(p, AcceptResp):
        w.u8(1 if p.ack else 0)
        w.ballot(p.current_max)
    elif isinstance(p, Learn):
        w.u64(p.grpver)
        w.entries(p.entries)
    elif isinstance(p, ReadResp):
        w.entries(p.found)
    # PrepareReq, ReadReq, Nack, Ack have no body beyond the frame
    out = bytes(w.buf)
    object.__setattr__(p, "_encoded", out)
    return out


def decode_payload(data: bytes) -> Payload:
    """Inverse of encode_payload on its image; MalformedPayload elsewhere."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise MalformedPayload("payload must be bytes")
    r = _Reader(bytes(data))
    version = r.u8()
    if version != WIRE_VERSION:
        raise MalformedPayload(f"unknown wire version {version}")
    tag = r.u8()
    cls = _BY_TAG.get(tag)
    if cls is None:
        raise MalformedPayload(f"unknown payload tag {tag}")
    rt = r.opt_text()
    try:
        if cls is PrepareReq:
            p: Payload = PrepareReq(response_target=rt)
        elif cls is PrepareResp:
            ack = r.flag()
            cm = r.ballot()
            prior = r.entries()
            p = PrepareResp(ack, cm, prior, response_target=rt)
        elif cls is AcceptReq:
            p = AcceptReq(r.value(), response_target=rt)
        elif cls is AcceptResp:
            ack = r.flag()
            p = AcceptResp(ack, r.ballot(), response_target=rt)
        elif cls is Learn:
            grpver = r.u64()
            p = Learn(r.entries(), grpver, response_target=rt)
        elif cls is ReadReq:
            p = ReadReq(response_target=rt)
        elif cls is ReadResp:
            p = ReadResp(r.entries(), response_target=rt)
        elif cls is Nack:
            p = Nack(response_target=rt)
        else:
            p = Ack(response_target=rt)
    except (EmptyAggregate, MalformedPayload) as exc:
        raise MalformedPayload(f"invalid {cls.__name__} body: {exc}") from None
    if r.pos != len(r.data):
        raise MalformedPayload(f"{len(r.data) - r.pos} trailing bytes after payload")
    # canonical form only: re-encoding must reproduce the input
    if encode_payload(p) != r.data:
        raise MalformedPayload("payload bytes are not in canonical form")
    return p


def payload_digest(p: Payload) -> str:
    return hashlib.sha256(encode_payload(p)).hexdigest()[:16]


@dataclass
class Message:
    """One simulated network message.

    ContentObjects answer exactly one Interest and carry that Interest's
    name; max_age_ms is meaningful for ContentObjects only.  Unicast push
    messages route by to_target (a routable prefix), multicast pushes by
    their group-scheme name.
    """

    kind: str
    name: str
    payload: Payload
    max_age_ms: int = 0
    to_target: str | None = None

    def __post_init__(self):
        if self.kind not in (INTEREST, CONTENT_OBJECT, PUSH, PUSH_ACK):
            raise MalformedPayload(f"unknown message kind {self.kind!r}")
        if self.kind != CONTENT_OBJECT and self.max_age_ms:
            raise MalformedPayload("max_age_ms applies to ContentObjects only")

    def digest(self) -> str:
        # cached: messages are shared across hops and traced at each one
        d = self.__dict__.get("_dig")
        if d is None:
            d = payload_digest(self.payload)
            self.__dict__["_dig"] = d
        return d

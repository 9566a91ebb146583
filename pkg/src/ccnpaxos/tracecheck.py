"""Offline invariant checks over simulator traces.

``check_trace`` walks a trace once and collects every violation instead of
stopping at the first, so a broken run reports all of its symptoms:

- agreement: all settlements of one slot carry the same value digest,
  no matter which node reports them or how (chosen, learned, ingested).
- validity: a settled digest was submitted by some node earlier in the
  trace.  Submission always precedes the wire send, so trace order is
  causal order here.
- stability: a single node never revises what it settled for a slot.
- cache_freshness: a cached ContentObject is only served while younger
  than its MaxAge.
- reverse_path: a forwarder sends a ContentObject to a face only when
  that face still owes it an Interest with the same name.

``from_jsonl`` rebuilds tuples from the JSON-lines trace format, raising
TraceError on anything unreadable.  An empty trace passes vacuously.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

from .errors import TraceError

__all__ = ["Violation", "check_trace", "check_file", "from_jsonl"]

# Protocol-level settlement events.  Every one carries var and iter in its
# extra fields plus the value digest in the digest column.
_SETTLE_KINDS = frozenset(("chosen", "learned", "ingested"))


@dataclass(frozen=True)
class Violation:
    """One broken invariant, anchored to the trace time it surfaced."""

    check: str
    detail: str
    t: int

    def __str__(self) -> str:
        return f"[{self.check}] t={self.t}: {self.detail}"


def check_trace(trace) -> "list[Violation]":
    """Run all checks over trace tuples and return every violation found."""
    out: list[Violation] = []
    fwds: set[str] = set()
    owed: Counter = Counter()  # (requester, forwarder, name) -> open Interests
    submitted: set[tuple] = set()  # (var, digest)
    slot_digest: dict = {}  # (var, iter) -> first settled digest
    node_digest: dict = {}  # (node, var, iter) -> that node's settled digest

    for t, kind, frm, to, name, digest, extra in trace:
        if kind == "topology":
            fwds.update(extra["forwarders"])
        elif kind == "interest" or (kind == "dup" and extra and extra.get("of") == "interest"):
            owed[(frm, to, name)] += 1
        elif kind == "content_object":
            if extra and extra.get("cache_hit"):
                age = t - extra["stored_at"]
                if age >= extra["max_age_ms"]:
                    out.append(
                        Violation(
                            "cache_freshness",
                            f"{name} served from cache at age {age}ms"
                            f" with MaxAge {extra['max_age_ms']}ms",
                            t,
                        )
                    )
            if frm in fwds:
                key = (to, frm, name)
                if owed[key] > 0:
                    owed[key] -= 1
                else:
                    out.append(
                        Violation(
                            "reverse_path",
                            f"{frm} sent {name} to {to} without a pending Interest",
                            t,
                        )
                    )
        elif kind == "submitted":
            submitted.add((extra["var"], digest))
        elif kind in _SETTLE_KINDS:
            var = extra.get("var") if extra else None
            it = extra.get("iter") if extra else None
            if var is None or it is None:
                out.append(Violation("malformed", f"{kind} line without var/iter", t))
                continue
            if (var, digest) not in submitted:
                out.append(
                    Violation(
                        "validity",
                        f"{frm} settled {digest} for {var}[{it}]"
                        " but no node submitted that value",
                        t,
                    )
                )
            first = slot_digest.setdefault((var, it), digest)
            if first != digest:
                out.append(
                    Violation(
                        "agreement",
                        f"{var}[{it}] settled as {digest} on {frm}"
                        f" but earlier as {first}",
                        t,
                    )
                )
            prior = node_digest.setdefault((frm, var, it), digest)
            if prior != digest:
                out.append(
                    Violation(
                        "stability",
                        f"{frm} changed its mind on {var}[{it}]:"
                        f" {prior} then {digest}",
                        t,
                    )
                )
    return out


def from_jsonl(lines) -> list:
    """Rebuild trace tuples from JSON-lines records.

    Inverse of ``netsim.trace_to_jsonl``: the six fixed fields become the
    tuple positions and any remaining keys become the extra dict.  Blank
    lines are skipped.  Raises TraceError with the offending line number
    on anything that is not a well-formed record.
    """
    trace = []
    for lineno, raw in enumerate(lines, 1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TraceError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise TraceError(f"line {lineno}: expected an object, got {type(rec).__name__}")
        try:
            line = (
                rec.pop("t"),
                rec.pop("kind"),
                rec.pop("from"),
                rec.pop("to"),
                rec.pop("name"),
                rec.pop("payload_digest"),
            )
        except KeyError as exc:
            raise TraceError(f"line {lineno}: missing field {exc.args[0]!r}") from None
        trace.append(line + (rec or None,))
    return trace


def check_file(path) -> "list[Violation]":
    """Check a JSON-lines trace file.  Unreadable input raises TraceError."""
    try:
        with open(path, encoding="utf-8") as fh:
            trace = from_jsonl(fh)
    except OSError as exc:
        raise TraceError(f"cannot read {path}: {exc.strerror or exc}") from None
    return check_trace(trace)

"""Reference state-based ORSWOT and its delta variant.

This is the semantic oracle for the decomposed set and the full-state
baseline for the cost benchmark. States are treated as immutable values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from bigset.clock import Dot, LogicalClock

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")

_EMPTY: frozenset = frozenset()


@dataclass(frozen=True)
class Orswot:
    clock: LogicalClock = field(default_factory=LogicalClock)
    entries: Mapping[bytes, frozenset[Dot]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for e, dots in self.entries.items():
            if not dots:
                raise ValueError(f"element {e!r} has an empty dot set")

    def contains(self, element: bytes) -> bool:
        return element in self.entries

    def check(self) -> None:
        """Assert that every entry dot is covered by the clock."""
        for e, dots in self.entries.items():
            for d in dots:
                if not self.clock.seen(d):
                    raise AssertionError(f"{e!r}: dot {d} not seen by clock {self.clock}")


# A delta is an ordinary Orswot whose clock is only the fragment it covers.
OrswotDelta = Orswot


def _untouched(dots: frozenset[Dot], clock: LogicalClock, small: frozenset | None) -> bool:
    # True iff ``clock`` has seen none of ``dots``.
    if small is not None:
        return small.isdisjoint(dots)
    return not any(clock.seen(d) for d in dots)


def orswot_merge(s1: Orswot, s2: Orswot) -> Orswot:
    c1, c2 = s1.clock, s2.clock
    # Delta clocks are tiny; materialise them for set-speed disjointness checks.
    small1 = frozenset(c1.dots()) if c1.dot_count() <= 16 else None
    small2 = frozenset(c2.dots()) if c2.dot_count() <= 16 else None
    entries: dict[bytes, frozenset[Dot]] = {}
    for e in s1.entries.keys() | s2.entries.keys():
        d1 = s1.entries.get(e, _EMPTY)
        d2 = s2.entries.get(e, _EMPTY)
        if d1 == d2:
            entries[e] = d1
            continue
        if not d2 and _untouched(d1, c2, small2):
            entries[e] = d1
            continue
        if not d1 and _untouched(d2, c1, small1):
            entries[e] = d2
            continue
        keep = (d1 & d2) | {d for d in d1 - d2 if not c2.seen(d)} | {d for d in d2 - d1 if not c1.seen(d)}
        if keep:
            entries[e] = frozenset(keep)
    return Orswot(c1.join(c2), entries)


def orswot_delta_add(
    s: Orswot, actor: bytes, element: bytes, ctx: Iterable[Dot] | None = None
) -> OrswotDelta:
    """Delta for adding ``element`` at ``actor``.

    Without a context the actor supersedes every dot it holds for the
    element; with one, only the context's dots are superseded.
    """
    ctx = frozenset(s.entries.get(element, _EMPTY) if ctx is None else ctx)
    _, dot = s.clock.join(LogicalClock.from_dots(ctx)).increment(actor)
    return Orswot(LogicalClock.from_dots(ctx | {dot}), {element: frozenset((dot,))})


def orswot_delta_remove(s: Orswot, element: bytes, ctx: Iterable[Dot] | None = None) -> OrswotDelta:
    ctx = s.entries.get(element, _EMPTY) if ctx is None else ctx
    return Orswot(LogicalClock.from_dots(ctx), {})


def orswot_delta_join(s: Orswot, delta: OrswotDelta) -> Orswot:
    return orswot_merge(s, delta)


def orswot_add(s: Orswot, actor: bytes, element: bytes, ctx: Iterable[Dot] | None = None) -> Orswot:
    return orswot_merge(s, orswot_delta_add(s, actor, element, ctx))


def orswot_remove(s: Orswot, element: bytes, ctx: Iterable[Dot] | None = None) -> Orswot:
    if ctx is None and element not in s.entries:
        return s
    return orswot_merge(s, orswot_delta_remove(s, element, ctx))


def orswot_value(s: Orswot) -> list[bytes]:
    return sorted(s.entries)


def merge_all(states: Iterable[Orswot]) -> Orswot:
    out = Orswot()
    for s in states:
        out = orswot_merge(out, s)
    return out


def encode_entry(element: bytes, dots: Iterable[Dot]) -> bytes:
    dots = sorted(dots)
    parts = [_U32.pack(len(element)), element, _U32.pack(len(dots))]
    for actor, event in dots:
        parts += [_U32.pack(len(actor)), actor, _U64.pack(event)]
    return b"".join(parts)


def encode_header(clock: LogicalClock, count: int) -> bytes:
    cb = clock.to_bytes()
    return _U32.pack(len(cb)) + cb + _U32.pack(count)


def encode_orswot(s: Orswot) -> bytes:
    parts = [encode_header(s.clock, len(s.entries))]
    parts += [encode_entry(e, s.entries[e]) for e in sorted(s.entries)]
    return b"".join(parts)


def decode_orswot_from(data: bytes, pos: int = 0) -> tuple[Orswot, int]:
    try:
        (clen,) = _U32.unpack_from(data, pos)
        pos += 4
        clock = LogicalClock.from_bytes(bytes(data[pos:pos + clen]))
        pos += clen
        (count,) = _U32.unpack_from(data, pos)
        pos += 4
        entries = {}
        for _ in range(count):
            (elen,) = _U32.unpack_from(data, pos)
            element = bytes(data[pos + 4:pos + 4 + elen])
            pos += 4 + elen
            (ndots,) = _U32.unpack_from(data, pos)
            pos += 4
            dots = []
            for _ in range(ndots):
                (alen,) = _U32.unpack_from(data, pos)
                actor = bytes(data[pos + 4:pos + 4 + alen])
                pos += 4 + alen
                (event,) = _U64.unpack_from(data, pos)
                pos += 8
                dots.append(Dot(actor, event))
            entries[element] = frozenset(dots)
    except struct.error as exc:
        raise ValueError(f"truncated orswot: {exc}") from None
    return Orswot(clock, entries), pos


def decode_orswot(data: bytes) -> Orswot:
    s, end = decode_orswot_from(data)
    if end != len(data):
        raise ValueError("trailing bytes after orswot")
    return s

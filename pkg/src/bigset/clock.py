"""Logical clocks: a base version vector plus a cloud of non-contiguous events.

The same structure serves as the set-clock (events seen) and the
set-tombstone (events whose keys await removal).
"""

from __future__ import annotations

import struct
from typing import Iterable, Iterator, Mapping, NamedTuple

MAX_EVENT = 2**64 - 1

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_QI = struct.Struct(">QI")


class ContractError(Exception):
    """A caller broke an operation's precondition."""


class _DotBase(NamedTuple):
    actor: bytes
    event: int


class Dot(_DotBase):
    """One insertion event: (actor id, event counter)."""

    __slots__ = ()

    def __new__(cls, actor: bytes, event: int) -> "Dot":
        if not isinstance(actor, bytes) or not actor:
            raise ContractError(f"actor must be nonempty bytes, got {actor!r}")
        if not 1 <= event <= MAX_EVENT:
            raise ContractError(f"event out of range: {event}")
        return super().__new__(cls, actor, event)

    def __repr__(self) -> str:
        return f"Dot({self.actor!r}, {self.event})"


def trusted_dot(actor: bytes, event: int) -> Dot:
    """Build a Dot from already-validated parts (decoders, clock iteration)."""
    return tuple.__new__(Dot, (actor, event))


def _compress(base: dict[bytes, int], cloud: dict[bytes, set[int]]) -> dict[bytes, frozenset[int]]:
    # Absorb cloud events contiguous with the base; mutates base.
    out = {}
    for actor, events in cloud.items():
        b = base.get(actor, 0)
        events = {e for e in events if e > b}
        while b + 1 in events:
            b += 1
            events.discard(b)
        if b:
            base[actor] = b
        if events:
            out[actor] = frozenset(events)
    return out


class LogicalClock:
    """Immutable clock value. Absent actors mean base 0 and an empty cloud."""

    __slots__ = ("_base", "_cloud", "_hash", "_bytes")

    def __init__(
        self,
        base: Mapping[bytes, int] | None = None,
        cloud: Mapping[bytes, Iterable[int]] | None = None,
    ) -> None:
        b = {a: n for a, n in (base or {}).items() if n}
        for a, n in b.items():
            if not a or n < 0 or n > MAX_EVENT:
                raise ContractError(f"bad base entry {a!r}: {n}")
        c: dict[bytes, set[int]] = {}
        for a, events in (cloud or {}).items():
            events = set(events)
            if any(e < 1 or e > MAX_EVENT for e in events):
                raise ContractError(f"bad cloud events for {a!r}")
            if events:
                c[a] = events
        self._cloud = _compress(b, c)
        self._base = b
        self._hash: int | None = None
        self._bytes: bytes | None = None

    @classmethod
    def _raw(cls, base: dict[bytes, int], cloud: dict[bytes, frozenset[int]]) -> "LogicalClock":
        # Skips validation; callers guarantee canonical form.
        c = object.__new__(cls)
        c._base = base
        c._cloud = cloud
        c._hash = None
        c._bytes = None
        return c

    @classmethod
    def from_dots(cls, dots: Iterable[Dot]) -> "LogicalClock":
        cloud: dict[bytes, set[int]] = {}
        for d in dots:
            cloud.setdefault(d.actor, set()).add(d.event)
        base: dict[bytes, int] = {}
        return cls._raw(base, _compress(base, cloud))

    @property
    def base(self) -> dict[bytes, int]:
        return dict(self._base)

    @property
    def cloud(self) -> dict[bytes, frozenset[int]]:
        return dict(self._cloud)

    def actors(self) -> list[bytes]:
        return sorted(self._base.keys() | self._cloud.keys())

    def is_empty(self) -> bool:
        return not self._base and not self._cloud

    def seen(self, dot: Dot) -> bool:
        actor, event = dot
        if event <= self._base.get(actor, 0):
            return True
        events = self._cloud.get(actor)
        return events is not None and event in events

    def increment(self, actor: bytes) -> tuple["LogicalClock", Dot]:
        """Mint the next event for ``actor``.

        An actor never holds cloud entries for itself, so incrementing one
        that does is a contract error.
        """
        if actor in self._cloud:
            raise ContractError(f"actor {actor!r} has cloud residue {sorted(self._cloud[actor])}")
        n = self._base.get(actor, 0) + 1
        dot = Dot(actor, n)
        base = dict(self._base)
        base[actor] = n
        return LogicalClock._raw(base, self._cloud), dot

    def add_dot(self, dot: Dot) -> "LogicalClock":
        if self.seen(dot):
            return self
        actor, event = dot
        base = dict(self._base)
        cloud = dict(self._cloud)
        events = set(cloud.pop(actor, ()))
        events.add(event)
        merged = _compress(base, {actor: events})
        cloud.update(merged)
        return LogicalClock._raw(base, cloud)

    def join(self, other: "LogicalClock") -> "LogicalClock":
        if other is self or other.is_empty():
            return self
        if self.is_empty():
            return other
        base = dict(self._base)
        for a, n in other._base.items():
            if n > base.get(a, 0):
                base[a] = n
        cloud: dict[bytes, set[int]] = {}
        for src in (self._cloud, other._cloud):
            for a, events in src.items():
                cloud.setdefault(a, set()).update(events)
        return LogicalClock._raw(base, _compress(base, cloud))

    def subtract_dot(self, dot: Dot) -> "LogicalClock":
        return self.subtract_dots((dot,))

    def subtract_dots(self, dots: Iterable[Dot]) -> "LogicalClock":
        """Forget the given dots; every other dot keeps its seen status."""
        by_actor: dict[bytes, set[int]] = {}
        for d in dots:
            if self.seen(d):
                by_actor.setdefault(d.actor, set()).add(d.event)
        if not by_actor:
            return self
        base = dict(self._base)
        cloud = dict(self._cloud)
        for actor, gone in by_actor.items():
            b = base.pop(actor, 0)
            low = min(gone)
            events = set(cloud.pop(actor, ()))
            if low <= b:
                events.update(range(low + 1, b + 1))
                b = low - 1
            events -= gone
            if b:
                base[actor] = b
            if events:
                cloud[actor] = frozenset(events)
        return LogicalClock._raw(base, cloud)

    def dominates(self, other: "LogicalClock") -> bool:
        """True iff every dot seen by ``other`` is seen by this clock."""
        for a, n in other._base.items():
            mine = self._base.get(a, 0)
            if n > mine:
                events = self._cloud.get(a, frozenset())
                if any(e not in events for e in range(mine + 1, n + 1)):
                    return False
        for a, events in other._cloud.items():
            for e in events:
                if not self.seen(Dot(a, e)):
                    return False
        return True

    def dots(self) -> Iterator[Dot]:
        """Every seen dot, ordered by (actor, event). Linear in the base counters."""
        for a in self.actors():
            b = self._base.get(a, 0)
            for e in range(1, b + 1):
                yield trusted_dot(a, e)
            for e in sorted(self._cloud.get(a, ())):
                yield trusted_dot(a, e)

    def dot_count(self) -> int:
        return sum(self._base.values()) + sum(len(v) for v in self._cloud.values())

    def is_compressed(self) -> bool:
        for a, events in self._cloud.items():
            b = self._base.get(a, 0)
            if not events or b + 1 in events or min(events) <= b:
                return False
        return all(n > 0 for n in self._base.values())

    def to_bytes(self) -> bytes:
        if self._bytes is None:
            self._bytes = self._encode()
        return self._bytes

    def _encode(self) -> bytes:
        actors = self.actors()
        parts = [_U32.pack(len(actors))]
        for a in actors:
            events = sorted(self._cloud.get(a, ()))
            parts.append(_U32.pack(len(a)))
            parts.append(a)
            parts.append(_QI.pack(self._base.get(a, 0), len(events)))
            if events:
                parts.append(struct.pack(f">{len(events)}Q", *events))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "LogicalClock":
        clock, end = cls.decode_from(data, 0)
        if end != len(data):
            raise ValueError(f"trailing bytes after clock: {len(data) - end}")
        return clock

    @classmethod
    def decode_from(cls, data: bytes, pos: int) -> tuple["LogicalClock", int]:
        start = pos
        try:
            (count,) = _U32.unpack_from(data, pos)
            pos += 4
            base: dict[bytes, int] = {}
            cloud: dict[bytes, frozenset[int]] = {}
            prev = None
            for _ in range(count):
                (alen,) = _U32.unpack_from(data, pos)
                pos += 4
                actor = bytes(data[pos:pos + alen])
                if len(actor) != alen or not actor:
                    raise ValueError("truncated actor")
                pos += alen
                if prev is not None and actor <= prev:
                    raise ValueError("actors out of order")
                prev = actor
                (b,) = _U64.unpack_from(data, pos)
                (ncloud,) = _U32.unpack_from(data, pos + 8)
                pos += 12
                events = [_U64.unpack_from(data, pos + 8 * i)[0] for i in range(ncloud)]
                pos += 8 * ncloud
                if b:
                    base[actor] = b
                if events:
                    cloud[actor] = frozenset(events)
        except struct.error as exc:
            raise ValueError(f"truncated clock: {exc}") from None
        clock = cls._raw(base, cloud)
        clock._bytes = bytes(data[start:pos])
        if not clock.is_compressed():
            raise ValueError("clock bytes are not in canonical form")
        return clock, pos

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LogicalClock):
            return NotImplemented
        return self._base == other._base and self._cloud == other._cloud

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((frozenset(self._base.items()), frozenset(self._cloud.items())))
        return self._hash

    def __repr__(self) -> str:
        base = {a: self._base[a] for a in sorted(self._base)}
        cloud = {a: sorted(self._cloud[a]) for a in sorted(self._cloud)}
        if cloud:
            return f"LogicalClock(base={base}, cloud={cloud})"
        return f"LogicalClock(base={base})"

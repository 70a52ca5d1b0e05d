"""The bigset vnode: a set decomposed into a set-clock, a set-tombstone and
one store key per surviving element insertion.

Writes touch only the two clock keys plus any new element key. Reads fold
the set's keyspace in element order, hiding keys whose dot the tombstone
covers. Compaction physically drops those keys and trims the tombstone.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from bigset.clock import Dot, LogicalClock
from bigset.orswot_ref import Orswot
from bigset.store import (
    BigsetKey,
    CompactionFilter,
    CompactionReport,
    Decision,
    Kind,
    MemoryStore,
    WriteBatch,
    clock_key,
    decode_key,
    element_key,
    element_prefix,
    elements_start,
    encode_key,
    prefix_end,
    tombstone_key,
)

DEFAULT_BATCH_SIZE = 10_000

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")

Context = frozenset  # frozenset[Dot]: the dots a client observed


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class Delta:
    """An element key plus the context it was inserted with; the replication unit."""

    key: BigsetKey
    ctx: frozenset[Dot] = frozenset()

    def __post_init__(self) -> None:
        if self.key.kind != Kind.ELEMENT:
            raise ValueError("a delta must carry an element key")

    @property
    def set(self) -> bytes:
        return self.key.set

    @property
    def element(self) -> bytes:
        return self.key.element

    @property
    def dot(self) -> Dot:
        return self.key.dot


def encode_delta(delta: Delta) -> bytes:
    kb = encode_key(delta.key)
    parts = [_U32.pack(len(kb)), kb, _U32.pack(len(delta.ctx))]
    for actor, event in sorted(delta.ctx):
        parts += [_U32.pack(len(actor)), actor, _U64.pack(event)]
    return b"".join(parts)


def decode_delta(data: bytes) -> Delta:
    try:
        (klen,) = _U32.unpack_from(data, 0)
        key = decode_key(bytes(data[4:4 + klen]))
        pos = 4 + klen
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
        ctx = []
        for _ in range(n):
            (alen,) = _U32.unpack_from(data, pos)
            actor = bytes(data[pos + 4:pos + 4 + alen])
            pos += 4 + alen
            (event,) = _U64.unpack_from(data, pos)
            pos += 8
            ctx.append(Dot(actor, event))
    except struct.error as exc:
        raise ValueError(f"truncated delta: {exc}") from None
    if pos != len(data):
        raise ValueError("trailing bytes after delta")
    return Delta(key, frozenset(ctx))


@dataclass
class ReadBatch:
    elements: list[tuple[bytes, frozenset[Dot]]]
    last: bool = False
    # Set on the final batch only: the set-clock the read was taken against.
    clock: LogicalClock | None = None


class ReadStream:
    """Batches of (element, surviving dots) in ascending element order.

    ``clock`` is available before the first batch; the final batch repeats it.
    """

    def __init__(self, clock: LogicalClock, tombstone: LogicalClock, batches: Iterator[ReadBatch]):
        self.clock = clock
        self.tombstone = tombstone
        self._batches = batches

    def __iter__(self) -> Iterator[ReadBatch]:
        return self._batches

    def elements(self) -> Iterator[tuple[bytes, frozenset[Dot]]]:
        for batch in self._batches:
            yield from batch.elements

    def to_orswot(self) -> Orswot:
        return Orswot(self.clock, dict(self.elements()))

    def value(self) -> list[bytes]:
        return [e for e, _ in self.elements()]


@dataclass(frozen=True)
class Membership:
    present: bool
    context: frozenset[Dot] = frozenset()
    clock: LogicalClock = field(default_factory=LogicalClock)

    def __iter__(self):
        # Unpacks as (present, context).
        return iter((self.present, self.context))


def _fold_context(
    sc: LogicalClock, ts: LogicalClock, ctx: Iterable[Dot]
) -> tuple[LogicalClock, LogicalClock]:
    # Seen dots are superseded (tombstoned); unseen ones must never be added.
    for d in ctx:
        if sc.seen(d):
            ts = ts.add_dot(d)
        else:
            sc = sc.add_dot(d)
    return sc, ts


class Replica:
    def __init__(self, actor: bytes, store: MemoryStore | None = None) -> None:
        if not actor:
            raise ValueError("actor id must be nonempty")
        self.actor = actor
        self.store = store if store is not None else MemoryStore()
        self._cache: dict[bytes, tuple[bytes, LogicalClock]] = {}
        self._clock_keys: dict[bytes, tuple[bytes, bytes]] = {}

    def __repr__(self) -> str:
        return f"Replica({self.actor!r})"

    # -- clocks ------------------------------------------------------------

    def _load(self, key: bytes) -> LogicalClock:
        raw = self.store.get(key)
        if raw is None:
            return LogicalClock()
        hit = self._cache.get(key)
        if hit is not None and (hit[0] is raw or hit[0] == raw):
            return hit[1]
        clock = LogicalClock.from_bytes(raw)
        self._cache[key] = (raw, clock)
        return clock

    def _keys_for(self, set_name: bytes) -> tuple[bytes, bytes]:
        keys = self._clock_keys.get(set_name)
        if keys is None:
            keys = (encode_key(clock_key(set_name)), encode_key(tombstone_key(set_name)))
            self._clock_keys[set_name] = keys
        return keys

    def clocks(self, set_name: bytes) -> tuple[LogicalClock, LogicalClock]:
        """Read the set-clock and set-tombstone (two store reads)."""
        ck, tk = self._keys_for(set_name)
        return self._load(ck), self._load(tk)

    def _write(
        self, batch: WriteBatch, set_name: bytes, sc: LogicalClock, ts: LogicalClock, if_changed: bool = False
    ) -> None:
        """Write ``batch`` atomically together with both clocks."""
        ck, tk = self._keys_for(set_name)
        batch.put(ck, sc.to_bytes(), if_changed)
        batch.put(tk, ts.to_bytes(), if_changed)
        self.store.batch_write(batch)
        self._cache[ck] = (sc.to_bytes(), sc)
        self._cache[tk] = (ts.to_bytes(), ts)

    # -- writes ------------------------------------------------------------

    def coordinate_insert(self, set_name: bytes, element: bytes, ctx: Iterable[Dot] = ()) -> Delta:
        return self.coordinate_insert_many(set_name, [(element, ctx)])[0]

    def coordinate_insert_many(
        self, set_name: bytes, items: Iterable[tuple[bytes, Iterable[Dot]]]
    ) -> list[Delta]:
        """Insert several elements in one atomic batch, in the given order."""
        sc, ts = self.clocks(set_name)
        batch = WriteBatch()
        deltas = []
        for element, ctx in items:
            ctx = frozenset(ctx)
            sc, ts = _fold_context(sc, ts, ctx)
            sc, dot = sc.increment(self.actor)
            key = element_key(set_name, element, dot)
            batch.put(encode_key(key), b"")
            deltas.append(Delta(key, ctx))
        self._write(batch, set_name, sc, ts)
        return deltas

    def apply_delta(self, delta: Delta) -> bool:
        """Apply a replicated insert. Returns whether the element key was written."""
        return self.apply_deltas(delta.set, [delta])[0]

    def apply_deltas(self, set_name: bytes, deltas: Iterable[Delta]) -> list[bool]:
        sc, ts = self.clocks(set_name)
        batch = WriteBatch()
        written = []
        for delta in deltas:
            if delta.set != set_name:
                raise ValueError(f"delta for set {delta.set!r} applied to {set_name!r}")
            sc, ts = _fold_context(sc, ts, delta.ctx)
            fresh = not sc.seen(delta.dot)
            if fresh:
                sc = sc.add_dot(delta.dot)
                batch.put(encode_key(delta.key), b"")
            written.append(fresh)
        # Duplicates only rewrite clocks whose bytes actually changed.
        self._write(batch, set_name, sc, ts, if_changed=not any(written))
        return written

    def remove(self, set_name: bytes, element: bytes, ctx: Iterable[Dot]) -> None:
        self.remove_many(set_name, [(element, ctx)])

    def remove_many(self, set_name: bytes, items: Iterable[tuple[bytes, Iterable[Dot]]]) -> None:
        """Remove observed insertions; an empty context observes nothing and is a no-op."""
        ctxs = [frozenset(ctx) for _, ctx in items]
        if not any(ctxs):
            return
        sc, ts = self.clocks(set_name)
        for ctx in ctxs:
            sc, ts = _fold_context(sc, ts, ctx)
        self._write(WriteBatch(), set_name, sc, ts)

    # -- reads -------------------------------------------------------------

    def read(self, set_name: bytes, batch_size: int = DEFAULT_BATCH_SIZE) -> ReadStream:
        return self.range_read(set_name, None, None, batch_size)

    def range_read(
        self,
        set_name: bytes,
        start: bytes | None = None,
        end: bytes | None = None,
        batch_size: int = DEFAULT_BATCH_SIZE,
    ) -> ReadStream:
        """Stream elements in [start, end); ``None`` leaves that side open."""
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        if start is not None and end is not None and start > end:
            raise ValueError("range start is after its end")
        sc, ts = self.clocks(set_name)
        all_elements = elements_start(set_name)
        lo = all_elements if start is None else element_prefix(set_name, start)
        hi = prefix_end(all_elements) if end is None else element_prefix(set_name, end)
        keys = self.store.iterate(lo, hi)
        return ReadStream(sc, ts, _fold(keys, sc, ts, batch_size))

    def is_member(self, set_name: bytes, element: bytes) -> Membership:
        """Seek straight to ``element``'s keys; cost is independent of set size."""
        sc, ts = self.clocks(set_name)
        prefix = element_prefix(set_name, element)
        dots = frozenset(
            d for d in (decode_key(k).dot for k, _ in self.store.iterate(prefix, prefix_end(prefix)))
            if not ts.seen(d)
        )
        return Membership(bool(dots), dots, sc)

    def value(self, set_name: bytes) -> list[bytes]:
        return self.read(set_name).value()

    def state(self, set_name: bytes) -> Orswot:
        """The replica's logical state as a reference ORSWOT."""
        return self.read(set_name).to_orswot()

    # -- compaction --------------------------------------------------------

    def compact_set(self, set_name: bytes) -> CompactionReport:
        """Drop every element key whose dot the tombstone covers, then trim it.

        After a full pass the remaining tombstone dots have no key on this
        replica and, being seen by the set-clock, never will; so it is reset.
        """
        sc, ts = self.clocks(set_name)
        if ts.is_empty():
            return CompactionReport()

        def decide(key: bytes, value: bytes) -> Decision:
            return Decision.DROP if ts.seen(decode_key(key).dot) else Decision.KEEP

        start = elements_start(set_name)
        report = self.store.compact(CompactionFilter(decide), start, prefix_end(start))
        self._write(WriteBatch(), set_name, sc, LogicalClock())
        return report

    # -- checks ------------------------------------------------------------

    def element_keys(self, set_name: bytes) -> list[BigsetKey]:
        """Every element key physically present, without charging metrics."""
        start = elements_start(set_name)
        end = prefix_end(start)
        return [decode_key(k) for k, _ in self.store.dump() if start <= k < end]

    def check_invariants(self, set_name: bytes) -> None:
        data = dict(self.store.dump())
        raw_sc = data.get(encode_key(clock_key(set_name)))
        raw_ts = data.get(encode_key(tombstone_key(set_name)))
        sc = LogicalClock.from_bytes(raw_sc) if raw_sc is not None else LogicalClock()
        ts = LogicalClock.from_bytes(raw_ts) if raw_ts is not None else LogicalClock()
        if not sc.dominates(ts):
            raise InvariantViolation(f"{self.actor!r}: tombstone {ts} not covered by set-clock {sc}")
        if self.actor in sc.cloud:
            raise InvariantViolation(f"{self.actor!r}: own actor in set-clock cloud {sc}")
        if not (sc.is_compressed() and ts.is_compressed()):
            raise InvariantViolation(f"{self.actor!r}: clock not in canonical form")
        for key in self.element_keys(set_name):
            if not sc.seen(key.dot):
                raise InvariantViolation(f"{self.actor!r}: element key {key} not seen by set-clock")


def _fold(
    keys: Iterator[tuple[bytes, bytes]], sc: LogicalClock, ts: LogicalClock, batch_size: int
) -> Iterator[ReadBatch]:
    batch: list[tuple[bytes, frozenset[Dot]]] = []
    current: bytes | None = None
    dots: list[Dot] = []
    for raw, _ in keys:
        key = decode_key(raw)
        if key.element != current:
            if dots:
                batch.append((current, frozenset(dots)))
                if len(batch) == batch_size:
                    yield ReadBatch(batch)
                    batch = []
            current, dots = key.element, []
        if not ts.seen(key.dot):
            dots.append(key.dot)
    if dots:
        batch.append((current, frozenset(dots)))
    if len(batch) == batch_size:
        yield ReadBatch(batch)
        batch = []
    yield ReadBatch(batch, last=True, clock=sc)

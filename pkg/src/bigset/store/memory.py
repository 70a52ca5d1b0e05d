"""In-memory ordered key/value store with atomic batches and a compaction hook."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterator

from sortedcontainers import SortedDict

# Per-record framing charged by the metrics: u32 key length + u32 value length.
RECORD_OVERHEAD = 8


class StoreError(Exception):
    """A store operation failed; the store is unchanged."""


@dataclass
class StoreMetrics:
    bytes_read: int = 0
    bytes_written: int = 0
    keys_read: int = 0
    keys_written: int = 0

    def copy(self) -> "StoreMetrics":
        return StoreMetrics(self.bytes_read, self.bytes_written, self.keys_read, self.keys_written)

    def __sub__(self, other: "StoreMetrics") -> "StoreMetrics":
        return StoreMetrics(
            self.bytes_read - other.bytes_read,
            self.bytes_written - other.bytes_written,
            self.keys_read - other.keys_read,
            self.keys_written - other.keys_written,
        )

    def __add__(self, other: "StoreMetrics") -> "StoreMetrics":
        return StoreMetrics(
            self.bytes_read + other.bytes_read,
            self.bytes_written + other.bytes_written,
            self.keys_read + other.keys_read,
            self.keys_written + other.keys_written,
        )


@dataclass
class WriteBatch:
    """Puts and deletes applied all-or-nothing by ``batch_write``.

Deletes apply before puts, so a key both deleted and put ends up present.

    A put flagged ``if_changed`` is skipped when the stored value already
    equals the new bytes.
    """

    puts: list[tuple[bytes, bytes, bool]] = field(default_factory=list)
    deletes: list[bytes] = field(default_factory=list)

    def put(self, key: bytes, value: bytes, if_changed: bool = False) -> "WriteBatch":
        self.puts.append((key, value, if_changed))
        return self

    def delete(self, key: bytes) -> "WriteBatch":
        self.deletes.append(key)
        return self

    def __len__(self) -> int:
        return len(self.puts) + len(self.deletes)


class Decision(enum.Enum):
    KEEP = "keep"
    DROP = "drop"


@dataclass
class CompactionFilter:
    decide: Callable[[bytes, bytes], Decision]
    on_finish: Callable[[list[bytes]], None] | None = None


@dataclass
class CompactionReport:
    kept: int = 0
    dropped: list[bytes] = field(default_factory=list)


class MemoryStore:
    """Sorted map of byte keys to byte values.

    ``batch_write`` is the single mutation entry point. Iterators work on a
    snapshot of their key range taken when ``iterate`` is called.
    """

    def __init__(self) -> None:
        self._data: SortedDict = SortedDict()
        self._metrics = StoreMetrics()
        self.closed = False

    def metrics(self) -> StoreMetrics:
        return self._metrics.copy()

    def _check_open(self) -> None:
        if self.closed:
            raise StoreError("store is closed")

    def close(self) -> None:
        self.closed = True

    def get(self, key: bytes) -> bytes | None:
        self._check_open()
        value = self._data.get(key)
        self._metrics.keys_read += 1
        if value is not None:
            self._metrics.bytes_read += len(key) + len(value) + RECORD_OVERHEAD
        return value

    def _effective(self, batch: WriteBatch) -> tuple[list[tuple[bytes, bytes]], list[bytes]]:
        puts = []
        for key, value, if_changed in batch.puts:
            if not isinstance(key, bytes) or not isinstance(value, bytes):
                raise StoreError("keys and values must be bytes")
            if if_changed and self._data.get(key) == value:
                continue
            puts.append((key, value))
        deletes = [k for k in dict.fromkeys(batch.deletes) if k in self._data]
        return puts, deletes

    def _persist(self, puts: list[tuple[bytes, bytes]], deletes: list[bytes]) -> None:
        """Durability hook for subclasses; raise StoreError to abort the batch."""

    def batch_write(self, batch: WriteBatch) -> None:
        self._check_open()
        puts, deletes = self._effective(batch)
        if not puts and not deletes:
            return
        self._persist(puts, deletes)
        m = self._metrics
        for key in deletes:
            del self._data[key]
            m.keys_written += 1
            m.bytes_written += len(key) + RECORD_OVERHEAD
        for key, value in puts:
            self._data[key] = value
            m.keys_written += 1
            m.bytes_written += len(key) + len(value) + RECORD_OVERHEAD

    def iterate(self, start: bytes = b"", end: bytes | None = None) -> Iterator[tuple[bytes, bytes]]:
        """Yield (key, value) for start <= key < end in byte order."""
        self._check_open()
        data = self._data
        keys = data.irange(start, end, inclusive=(True, False))
        snapshot = [(k, data[k]) for k in keys]
        return self._consume(snapshot)

    def _consume(self, snapshot: list[tuple[bytes, bytes]]) -> Iterator[tuple[bytes, bytes]]:
        m = self._metrics
        for key, value in snapshot:
            m.keys_read += 1
            m.bytes_read += len(key) + len(value) + RECORD_OVERHEAD
            yield key, value

    def __len__(self) -> int:
        return len(self._data)

    def dump(self) -> list[tuple[bytes, bytes]]:
        """Every entry in key order, without touching the metrics."""
        return list(self._data.items())

    def compact(
        self, filt: CompactionFilter, start: bytes = b"", end: bytes | None = None
    ) -> CompactionReport:
        """Run ``filt`` over [start, end) and physically remove every dropped key."""
        report = CompactionReport()
        for key, value in self.iterate(start, end):
            if filt.decide(key, value) is Decision.DROP:
                report.dropped.append(key)
            else:
                report.kept += 1
        if report.dropped:
            self._drop(report.dropped)
        if filt.on_finish is not None:
            filt.on_finish(report.dropped)
        return report

    def _drop(self, keys: list[bytes]) -> None:
        # Physical removal, not a logical delete: not charged as writes.
        self._persist([], keys)
        for key in keys:
            del self._data[key]

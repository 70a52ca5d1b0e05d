"""Streaming join of R replicas' ordered element streams.

A dot survives the join iff every replica either reports it or has not
seen it; this is pairwise ORSWOT merge folded over R states, evaluated one
element at a time so only the current head of each stream is held.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from bigset.clock import Dot, LogicalClock
from bigset.replica import DEFAULT_BATCH_SIZE, ReadBatch, Replica


class StreamOrderError(Exception):
    def __init__(self, source, previous: bytes, got: bytes) -> None:
        super().__init__(f"stream {source!r} went from {previous!r} to {got!r}; order must be strictly ascending")
        self.source = source


@dataclass
class ReplicaStream:
    source: object
    clock: LogicalClock
    elements: Iterable[tuple[bytes, frozenset[Dot]]]


def replica_stream(replica: Replica, set_name: bytes, batch_size: int = DEFAULT_BATCH_SIZE) -> ReplicaStream:
    rs = replica.read(set_name, batch_size)
    return ReplicaStream(replica.actor, rs.clock, rs.elements())


def surviving_dots(responses: Sequence[tuple[LogicalClock, frozenset[Dot]]]) -> frozenset[Dot]:
    candidates = set().union(*(dots for _, dots in responses))
    return frozenset(
        d for d in candidates
        if all(d in dots or not clock.seen(d) for clock, dots in responses)
    )


def quorum_member(responses: Sequence[tuple[LogicalClock, frozenset[Dot]]]) -> bool:
    """Membership of one element from R replicas' (clock, dots) answers."""
    if not responses:
        raise ValueError("quorum_member needs at least one response")
    return bool(surviving_dots(responses))


class _Head:
    __slots__ = ("stream", "it", "item", "prev")

    def __init__(self, stream: ReplicaStream) -> None:
        self.stream = stream
        self.it = iter(stream.elements)
        self.item: tuple[bytes, frozenset[Dot]] | None = None
        self.prev: bytes | None = None

    def advance(self) -> None:
        nxt = next(self.it, None)
        if nxt is not None and self.prev is not None and nxt[0] <= self.prev:
            raise StreamOrderError(self.stream.source, self.prev, nxt[0])
        self.item = nxt
        if nxt is not None:
            self.prev = nxt[0]


class MergedStream:
    """Iterates merged ReadBatches; ``clock`` is the join of every stream's clock."""

    def __init__(self, streams: Sequence[ReplicaStream], batch_size: int = DEFAULT_BATCH_SIZE) -> None:
        if not streams:
            raise ValueError("merge_streams needs at least one stream")
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.streams = list(streams)
        self.batch_size = batch_size
        self.clock = LogicalClock()
        for s in self.streams:
            self.clock = self.clock.join(s.clock)
        self.peak_buffered = 0
        self._batches = self._run()

    def __iter__(self) -> Iterator[ReadBatch]:
        return self._batches

    def elements(self) -> Iterator[tuple[bytes, frozenset[Dot]]]:
        for batch in self._batches:
            yield from batch.elements

    def value(self) -> list[bytes]:
        return [e for e, _ in self.elements()]

    def _run(self) -> Iterator[ReadBatch]:
        heads = [_Head(s) for s in self.streams]
        for h in heads:
            h.advance()
        batch: list[tuple[bytes, frozenset[Dot]]] = []
        while True:
            live = [h for h in heads if h.item is not None]
            self.peak_buffered = max(self.peak_buffered, len(live))
            if not live:
                break
            element = min(h.item[0] for h in live)
            responses = []
            for h in heads:
                if h.item is not None and h.item[0] == element:
                    responses.append((h.stream.clock, h.item[1]))
                    h.advance()
                else:
                    # This stream has no key for the element: it contributes no dots.
                    responses.append((h.stream.clock, frozenset()))
            dots = surviving_dots(responses)
            if dots:
                batch.append((element, dots))
                if len(batch) == self.batch_size:
                    yield ReadBatch(batch)
                    batch = []
        yield ReadBatch(batch, last=True, clock=self.clock)


def merge_streams(streams: Sequence[ReplicaStream], batch_size: int = DEFAULT_BATCH_SIZE) -> MergedStream:
    return MergedStream(streams, batch_size)

"""Logical cost benchmark: full-state ORSWOT vs delta ORSWOT vs bigset.

Every mode runs a small cluster (one coordinator, N-1 downstream replicas),
each replica on its own in-memory store. Costs are the store metric deltas
summed over the cluster, plus bytes sent downstream. Wall-clock time is
recorded per op but never asserted.
"""

from __future__ import annotations

import argparse
import bisect
import csv
import math
import random
import statistics
import struct
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from bigset.clock import Dot, LogicalClock
from bigset.orswot_ref import (
    Orswot,
    decode_orswot_from,
    encode_entry,
    encode_header,
    encode_orswot,
    orswot_merge,
)
from bigset.replica import Replica, decode_delta, encode_delta
from bigset.store import MemoryStore, StoreMetrics, WriteBatch

MODES = ("fullstate", "delta", "bigset")
DISTRIBUTIONS = ("sequential", "pareto")
# Shape log_4(5): with the scale used below, ~20% of keys draw ~80% of ops.
PARETO_SHAPE = math.log(5, 4)
CSV_HEADER = ["mode", "n", "op_index", "op_type", "bytes_read", "bytes_written", "bytes_transferred", "elapsed_ns"]

FULLSTATE_EXPONENT = (1.8, 2.2)
BIGSET_EXPONENT = (0.9, 1.1)
BIGSET_PER_INSERT_RATIO = 1.25

_U32 = struct.Struct(">I")


@dataclass
class Workload:
    mode: str
    cardinality: int
    element_size: int = 4
    ops: int | None = None
    mix: tuple[int, int] | None = None
    keys: int = 1
    dist: str = "sequential"
    seed: int = 0
    n_replicas: int = 3
    sample_every: int = 1

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.cardinality < 1 or self.element_size < 1 or self.keys < 1 or self.n_replicas < 1:
            raise ValueError("cardinality, element size, keys and replicas must be positive")
        if self.dist not in DISTRIBUTIONS:
            raise ValueError(f"dist must be one of {DISTRIBUTIONS}")
        if self.mix is not None and (min(self.mix) < 0 or sum(self.mix) == 0):
            raise ValueError("mix needs non-negative weights with a positive sum")
        if self.cardinality > 256 ** self.element_size:
            raise ValueError("element size too small for that many distinct elements")
        if self.sample_every < 1:
            raise ValueError("sample_every must be positive")


@dataclass
class OpCost:
    op_index: int
    op_type: str
    n: int
    bytes_read: int
    bytes_written: int
    bytes_transferred: int
    keys_read: int
    bytes_decoded: int
    elapsed_ns: int

    @property
    def logical(self) -> int:
        return self.bytes_read + self.bytes_written


@dataclass
class CostReport:
    workload: Workload
    ops: list[OpCost] = field(default_factory=list)

    def total(self, attr: str, op_type: str | None = None) -> int:
        return sum(getattr(o, attr) for o in self.ops if op_type is None or o.op_type == op_type)

    @property
    def bytes_read(self) -> int:
        return self.total("bytes_read")

    @property
    def bytes_written(self) -> int:
        return self.total("bytes_written")

    @property
    def bytes_transferred(self) -> int:
        return self.total("bytes_transferred")

    def percentiles(self, op_type: str | None = None) -> dict[str, float]:
        costs = [o.logical for o in self.ops if op_type is None or o.op_type == op_type]
        if not costs:
            return {}
        if len(costs) == 1:
            return {"p50": costs[0], "p95": costs[0], "p99": costs[0]}
        q = statistics.quantiles(costs, n=100, method="inclusive")
        return {"p50": q[49], "p95": q[94], "p99": q[98]}

    def rows(self) -> list[list]:
        """CSV rows, one per sample window; each row sums the ops in its window."""
        mode, every = self.workload.mode, self.workload.sample_every
        out = []
        for start in range(0, len(self.ops), every):
            win = self.ops[start:start + every]
            last = win[-1]
            out.append([mode, last.n, last.op_index, last.op_type if len({o.op_type for o in win}) == 1 else "mixed",
                        *(sum(getattr(o, a) for o in win)
                          for a in ("bytes_read", "bytes_written", "bytes_transferred", "elapsed_ns"))])
        return out


def write_csv(reports: Iterable[CostReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in reports:
            w.writerows(r.rows())


# -- full-state and delta baselines ----------------------------------------


def encode_object(vv: LogicalClock, s: Orswot) -> bytes:
    """A stored object: its version vector, then the serialized set."""
    vb = vv.to_bytes()
    return _U32.pack(len(vb)) + vb + encode_orswot(s)


def decode_object_vv(raw: bytes) -> LogicalClock:
    (n,) = _U32.unpack_from(raw, 0)
    return LogicalClock.from_bytes(raw[4:4 + n])


def decode_object(raw: bytes) -> tuple[LogicalClock, Orswot]:
    (n,) = _U32.unpack_from(raw, 0)
    vv = LogicalClock.from_bytes(raw[4:4 + n])
    s, end = decode_orswot_from(raw, 4 + n)
    if end != len(raw):
        raise ValueError("trailing bytes after object")
    return vv, s


class SetObject:
    """Mutable in-memory mirror of one stored set object.

    Keeps per-entry encodings in element order so ``encode`` stays a join
    instead of re-serialising every entry; output equals ``encode_object``.
    """

    def __init__(self, vv: LogicalClock | None = None, state: Orswot | None = None) -> None:
        state = state or Orswot()
        self.vv = vv or LogicalClock()
        self.clock = state.clock
        self.entries: dict[bytes, frozenset[Dot]] = dict(state.entries)
        self.elems = sorted(self.entries)
        self.chunks = [encode_entry(e, self.entries[e]) for e in self.elems]
        self.owner = {d: e for e, dots in self.entries.items() for d in dots}
        self.raw: bytes | None = None

    def _set(self, element: bytes, dots: frozenset[Dot]) -> None:
        old = self.entries.get(element, frozenset())
        for d in old - dots:
            del self.owner[d]
        for d in dots - old:
            self.owner[d] = element
        i = bisect.bisect_left(self.elems, element)
        present = i < len(self.elems) and self.elems[i] == element
        if not dots:
            if present:
                del self.elems[i], self.chunks[i]
                del self.entries[element]
            return
        self.entries[element] = dots
        if present:
            self.chunks[i] = encode_entry(element, dots)
        else:
            self.elems.insert(i, element)
            self.chunks.insert(i, encode_entry(element, dots))

    def add(self, actor: bytes, element: bytes) -> Orswot:
        """Local add: the new dot supersedes every dot held for ``element``. Returns the delta."""
        ctx = self.entries.get(element, frozenset())
        self.clock, dot = self.clock.increment(actor)
        self._set(element, frozenset((dot,)))
        return Orswot(LogicalClock.from_dots(ctx | {dot}), {element: frozenset((dot,))})

    def absorb(self, delta: Orswot) -> None:
        """Join a delta whose clock is small; equivalent to orswot_merge."""
        touched: dict[bytes, set[Dot]] = {}
        for d in delta.clock.dots():
            e = self.owner.get(d)
            if e is not None and d not in delta.entries.get(e, ()):
                touched.setdefault(e, set(self.entries[e])).discard(d)
        for e, dots in delta.entries.items():
            for d in dots:
                if not self.clock.seen(d):
                    touched.setdefault(e, set(self.entries.get(e, ()))).add(d)
        for e, dots in touched.items():
            self._set(e, frozenset(dots))
        self.clock = self.clock.join(delta.clock)

    def state(self) -> Orswot:
        return Orswot(self.clock, dict(self.entries))

    def encode(self) -> bytes:
        vb = self.vv.to_bytes()
        self.raw = b"".join([_U32.pack(len(vb)), vb, encode_header(self.clock, len(self.elems)), *self.chunks])
        return self.raw


class _Cluster:
    def __init__(self, n_replicas: int) -> None:
        self.actors = [b"r%d" % i for i in range(n_replicas)]
        self.stores = [MemoryStore() for _ in range(n_replicas)]
        self.decoded = 0

    def metrics(self) -> StoreMetrics:
        total = StoreMetrics()
        for s in self.stores:
            total = total + s.metrics()
        return total


class ObjectCluster(_Cluster):
    """Whole-set-per-key storage, replicated as full state or as deltas."""

    def __init__(self, n_replicas: int, delta: bool = False) -> None:
        super().__init__(n_replicas)
        self.delta = delta
        self.mirrors: list[dict[bytes, SetObject]] = [{} for _ in range(n_replicas)]

    def _load(self, j: int, key: bytes) -> SetObject:
        raw = self.stores[j].get(key)
        if raw is None:
            return SetObject()
        self.decoded += len(raw)
        mirror = self.mirrors[j].get(key)
        if mirror is not None and mirror.raw is raw:
            return mirror
        obj = SetObject(*decode_object(raw))
        obj.raw = raw
        return obj

    def _store(self, j: int, key: bytes, obj: SetObject | None, raw: bytes) -> None:
        self.stores[j].batch_write(WriteBatch().put(key, raw))
        if obj is None:
            self.mirrors[j].pop(key, None)
        else:
            self.mirrors[j][key] = obj

    def insert(self, key: bytes, element: bytes) -> int:
        obj = self._load(0, key)
        delta = obj.add(self.actors[0], element)
        obj.vv, _ = obj.vv.increment(self.actors[0])
        raw = obj.encode()
        self._store(0, key, obj, raw)
        sent = 0
        if self.delta:
            wire = encode_object(obj.vv, delta)
            for j in range(1, len(self.stores)):
                sent += len(wire)
                incoming_vv, d = decode_object(wire)
                local = self._load(j, key)
                local.absorb(d)
                local.vv = local.vv.join(incoming_vv)
                self._store(j, key, local, local.encode())
            return sent
        for j in range(1, len(self.stores)):
            sent += len(raw)
            local_raw = self.stores[j].get(key)
            if local_raw is None or decode_object_vv(raw).dominates(decode_object_vv(local_raw)):
                self._store(j, key, None, raw)
            else:
                self.decoded += len(local_raw) + len(raw)
                lvv, ls = decode_object(local_raw)
                ivv, s = decode_object(raw)
                merged = SetObject(lvv.join(ivv), orswot_merge(ls, s))
                self._store(j, key, merged, merged.encode())
        return sent

    def read(self, key: bytes) -> list[bytes]:
        return list(self._load(0, key).elems)

    def is_member(self, key: bytes, element: bytes) -> bool:
        return element in self._load(0, key).entries


class BigsetCluster(_Cluster):
    def __init__(self, n_replicas: int) -> None:
        super().__init__(n_replicas)
        self.replicas = [Replica(a, s) for a, s in zip(self.actors, self.stores)]

    def insert(self, key: bytes, element: bytes) -> int:
        delta = self.replicas[0].coordinate_insert(key, element)
        wire = encode_delta(delta)
        for r in self.replicas[1:]:
            r.apply_delta(decode_delta(wire))
        return len(wire) * (len(self.replicas) - 1)

    def read(self, key: bytes) -> list[bytes]:
        return self.replicas[0].read(key).value()

    def is_member(self, key: bytes, element: bytes) -> bool:
        return self.replicas[0].is_member(key, element).present


def make_cluster(mode: str, n_replicas: int = 3):
    if mode == "bigset":
        return BigsetCluster(n_replicas)
    if mode in ("fullstate", "delta"):
        return ObjectCluster(n_replicas, delta=mode == "delta")
    raise ValueError(f"unknown mode {mode!r}")


# -- running workloads -----------------------------------------------------


def element_bytes(index: int, size: int) -> bytes:
    return index.to_bytes(size, "big")


def pareto_index(rng: random.Random, keys: int) -> int:
    """Key index from a Lomax (Pareto II) law truncated to [0, keys); low indexes are hot.

    Scale keys/15 with shape log_4(5) puts 80% of the untruncated mass below
    0.2 * keys; truncation nudges the hot fifth's share to about 83%.
    """
    if keys == 1:
        return 0
    a, scale = PARETO_SHAPE, keys / 15
    top = 1.0 - (1.0 + keys / scale) ** -a
    u = rng.random() * top
    x = scale * ((1.0 - u) ** (-1.0 / a) - 1.0)
    return min(int(x), keys - 1)


def _measure(cluster, op_index: int, op_type: str, n: int, fn: Callable[[], int]) -> OpCost:
    before = cluster.metrics()
    decoded = cluster.decoded
    t0 = time.perf_counter_ns()
    sent = fn()
    elapsed = time.perf_counter_ns() - t0
    d = cluster.metrics() - before
    return OpCost(op_index, op_type, n, d.bytes_read, d.bytes_written, sent, d.keys_read,
                  cluster.decoded - decoded, elapsed)


def run_bench(w: Workload) -> CostReport:
    cluster = make_cluster(w.mode, w.n_replicas)
    rng = random.Random(w.seed)
    names = [b"set-%d" % k for k in range(w.keys)]
    sizes = [0] * w.keys
    report = CostReport(w)

    def pick(i: int) -> int:
        if w.dist == "pareto":
            return pareto_index(rng, w.keys)
        return (i // w.cardinality) % w.keys

    def insert(k: int) -> int:
        sent = cluster.insert(names[k], element_bytes(sizes[k], w.element_size))
        sizes[k] += 1
        return sent

    if w.mix is None:
        total = w.ops if w.ops is not None else w.cardinality * w.keys
        for i in range(total):
            k = pick(i)
            report.ops.append(_measure(cluster, i, "insert", sizes[k] + 1, lambda: insert(k)))
        return report

    for k in range(w.keys):
        for _ in range(w.cardinality):
            insert(k)
    wr, rd = w.mix
    for i in range(w.ops if w.ops is not None else 1000):
        k = pick(i)
        if rng.random() < wr / (wr + rd):
            report.ops.append(_measure(cluster, i, "insert", sizes[k] + 1, lambda: insert(k)))
        else:
            report.ops.append(_measure(cluster, i, "read", sizes[k], lambda: (cluster.read(names[k]), 0)[1]))
    return report


def read_bench(w: Workload) -> CostReport:
    """Populate each set to the workload cardinality, then time full reads and membership checks."""
    cluster = make_cluster(w.mode, w.n_replicas)
    rng = random.Random(w.seed)
    names = [b"set-%d" % k for k in range(w.keys)]
    for name in names:
        for i in range(w.cardinality):
            cluster.insert(name, element_bytes(i, w.element_size))
    report = CostReport(w)
    for i in range(w.ops if w.ops is not None else len(names)):
        k = pareto_index(rng, w.keys) if w.dist == "pareto" else i % w.keys
        probe = element_bytes(rng.randrange(w.cardinality), w.element_size)
        report.ops.append(_measure(cluster, 2 * i, "read", w.cardinality,
                                   lambda: (cluster.read(names[k]), 0)[1]))
        report.ops.append(_measure(cluster, 2 * i + 1, "is_member", w.cardinality,
                                   lambda: (cluster.is_member(names[k], probe), 0)[1]))
    return report


# -- trend verdicts --------------------------------------------------------


@dataclass
class TrendVerdict:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def growth_exponent(ns: Sequence[int], totals: Sequence[float]) -> float:
    """Slope of log(total) against log(n)."""
    if len(ns) < 2 or len(set(ns)) < 2:
        raise ValueError("need at least two distinct cardinalities to fit an exponent")
    return statistics.linear_regression([math.log(n) for n in ns], [math.log(t) for t in totals]).slope


def per_insert(report: CostReport, n: int) -> int:
    """bytes_written by the insert that took the set to cardinality ``n``."""
    for o in report.ops:
        if o.op_type == "insert" and o.n == n:
            return o.bytes_written
    raise KeyError(n)


def compare_modes(workloads: Sequence[Workload], reports: dict | None = None) -> list[TrendVerdict]:
    """Fit cumulative-write growth per mode over insert-only fills of differing cardinality."""
    by_mode: dict[str, list[tuple[int, CostReport]]] = {}
    for w in workloads:
        if w.mix is not None:
            raise ValueError("trend comparison needs insert-only workloads")
        r = reports[(w.mode, w.cardinality)] if reports else run_bench(w)
        by_mode.setdefault(w.mode, []).append((w.cardinality, r))
    if len(by_mode) < 2:
        raise ValueError("need at least two modes to compare")
    verdicts = []
    for mode, runs in sorted(by_mode.items()):
        runs.sort(key=lambda t: t[0])
        ns = [n for n, _ in runs]
        exp = growth_exponent(ns, [r.bytes_written for _, r in runs])
        costs = [per_insert(r, n) for n, r in runs]
        if mode == "bigset":
            lo, hi = BIGSET_EXPONENT
            ratio = costs[-1] / costs[0]
            verdicts.append(TrendVerdict("bigset cumulative-write exponent", lo <= exp <= hi,
                                         f"{exp:.3f} (want [{lo}, {hi}])"))
            verdicts.append(TrendVerdict(
                "bigset per-insert cost flat", ratio <= BIGSET_PER_INSERT_RATIO,
                f"n={ns[-1]}/n={ns[0]} ratio {ratio:.3f} (want <= {BIGSET_PER_INSERT_RATIO}); bytes {costs}"))
        else:
            lo, hi = FULLSTATE_EXPONENT
            verdicts.append(TrendVerdict(f"{mode} cumulative-write exponent", lo <= exp <= hi,
                                         f"{exp:.3f} (want [{lo}, {hi}])"))
            rising = all(a < b for a, b in zip(costs, costs[1:]))
            verdicts.append(TrendVerdict(f"{mode} per-insert cost rising", rising,
                                         f"bytes per insert at n={ns}: {costs}"))
    return verdicts


def read_verdicts(cardinality: int, element_size: int = 4, seed: int = 0) -> list[TrendVerdict]:
    """Full reads must cost bigset more than the single-object full-state read."""
    big = read_bench(Workload("bigset", cardinality, element_size, seed=seed))
    full = read_bench(Workload("fullstate", cardinality, element_size, seed=seed))
    out = []
    for attr in ("bytes_read", "keys_read"):
        b, f = big.total(attr, "read"), full.total(attr, "read")
        out.append(TrendVerdict(f"full-read {attr} bigset > fullstate", b > f, f"{b} vs {f} at n={cardinality}"))
    return out


# -- CLI -------------------------------------------------------------------


def _mix(text: str) -> tuple[int, int]:
    w, sep, r = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError("mix must look like W:R, e.g. 60:40")
    return int(w), int(r)


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bigset-bench", description="Compare logical write/read costs of set designs.")
    p.add_argument("--mode", default="all", choices=(*MODES, "all"))
    p.add_argument("--cardinality", type=_ints, default=[500, 1000, 2000, 4000],
                   help="comma-separated set sizes to fill to")
    p.add_argument("--element-size", type=int, default=4)
    p.add_argument("--ops", type=int, default=None)
    p.add_argument("--mix", type=_mix, default=None, help="write:read ratio, e.g. 60:40")
    p.add_argument("--keys", type=int, default=1)
    p.add_argument("--dist", choices=DISTRIBUTIONS, default="sequential")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicas", type=int, default=3)
    p.add_argument("--sample-every", type=int, default=1, help="ops per CSV row")
    p.add_argument("--csv", dest="csv_path", default=None)
    p.add_argument("--assert-trends", action="store_true",
                   help="exit nonzero unless the cost trends hold")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    modes = MODES if args.mode == "all" else (args.mode,)
    workloads = [
        Workload(m, n, args.element_size, args.ops, args.mix, args.keys, args.dist, args.seed, args.replicas,
                 args.sample_every)
        for m in modes for n in args.cardinality
    ]
    reports = {}
    print(f"{'mode':>10} {'n':>7} {'ops':>7} {'bytes_read':>14} {'bytes_written':>14} "
          f"{'transferred':>13} {'p95 op cost':>12} {'seconds':>8}")
    for w in workloads:
        r = run_bench(w)
        reports[(w.mode, w.cardinality)] = r
        p95 = r.percentiles().get("p95", 0)
        secs = r.total("elapsed_ns") / 1e9
        print(f"{w.mode:>10} {w.cardinality:>7} {len(r.ops):>7} {r.bytes_read:>14} {r.bytes_written:>14} "
              f"{r.bytes_transferred:>13} {p95:>12.0f} {secs:>8.2f}")
    if args.csv_path:
        write_csv(reports.values(), args.csv_path)
    if not args.assert_trends:
        return 0
    if args.mix is not None or args.keys != 1:
        print("--assert-trends needs single-key insert-only workloads", file=sys.stderr)
        return 2
    verdicts = compare_modes(workloads, reports)
    verdicts += read_verdicts(max(args.cardinality), args.element_size, args.seed)
    for v in verdicts:
        print(v.line())
    return 0 if all(v.passed for v in verdicts) else 1


if __name__ == "__main__":
    sys.exit(main())

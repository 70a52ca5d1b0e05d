"""Deterministic multi-replica harness.

Client operations are coordinated at one replica and replicated to the
others with seeded reordering, duplication and drop-then-redeliver
faults. Each replica is shadowed by a reference ORSWOT fed the same events;
after the network drains every replica must agree with its shadow, with
the other replicas, and with the join of all shadows.
"""

from __future__ import annotations

import argparse
import heapq
import json
import random
import sys
from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, Sequence

from bigset.clock import Dot
from bigset.merge_stream import merge_streams, replica_stream
from bigset.orswot_ref import (
    Orswot,
    merge_all,
    orswot_delta_add,
    orswot_delta_join,
    orswot_delta_remove,
    orswot_value,
)
from bigset.replica import Replica, decode_delta, encode_delta
from bigset.store import StoreMetrics

SET = b"set"
POLICIES = ("split", "same")


@dataclass
class ScenarioConfig:
    seed: int = 0
    n_replicas: int = 3
    op_count: int = 200
    universe: int = 12
    remove_rate: float = 0.35
    blind_add_rate: float = 0.1
    duplicate_rate: float = 0.1
    reorder_window: int = 8
    drop_rate: float = 0.05
    compact_rate: float = 0.05
    read_rate: float = 0.05
    read_quorum: int = 2
    session_policy: str = "split"
    batch_size: int = 4

    def __post_init__(self) -> None:
        for name in ("remove_rate", "blind_add_rate", "duplicate_rate", "drop_rate", "compact_rate", "read_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")
        if self.n_replicas < 1:
            raise ValueError("n_replicas must be at least 1")
        if not 1 <= self.read_quorum <= self.n_replicas:
            raise ValueError("read_quorum must be in [1, n_replicas]")
        if self.reorder_window < 1 or self.universe < 1 or self.op_count < 0 or self.batch_size < 1:
            raise ValueError("reorder_window, universe and batch_size must be positive")
        if self.session_policy not in POLICIES:
            raise ValueError(f"session_policy must be one of {POLICIES}")

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ScenarioConfig":
        """Parse ``key=value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in types:
                raise ValueError(f"line {lineno}: expected known key=value, got {line!r}")
            values[key] = _coerce(types[key], raw.strip())
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _coerce(type_name, raw: str):
    if type_name in ("int", int):
        return int(raw)
    if type_name in ("float", float):
        return float(raw)
    return raw


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    values: list[list[bytes]]
    oracle_value: list[bytes]
    metrics: list[StoreMetrics]
    trace: list[dict]
    failures: list[str] = field(default_factory=list)
    minimized_trace: list[dict] | None = None
    quorum_reads: int = 0
    compactions: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures


@dataclass
class Convergence:
    ok: bool
    first_difference: bytes | None = None
    detail: str = ""


class ClientSession:
    """Chooses where a client reads its context and where its op is coordinated.

    ``split`` models a client that reads from one vnode and writes to another;
    ``same`` reads and writes at one vnode.
    """

    def __init__(self, n_replicas: int, policy: str = "split") -> None:
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.n = n_replicas
        self.policy = policy

    def pick(self, rng: random.Random) -> tuple[int, int]:
        coord = rng.randrange(self.n)
        if self.policy == "same":
            return coord, coord
        return rng.randrange(self.n), coord


def check_convergence(replicas: Sequence[Replica], set_name: bytes = SET) -> Convergence:
    for r in replicas:
        r.check_invariants(set_name)
    values = [set(r.value(set_name)) for r in replicas]
    for i, v in enumerate(values[1:], 1):
        if v != values[0]:
            first = min(v ^ values[0])
            return Convergence(
                False, first, f"{replicas[0].actor!r} and {replicas[i].actor!r} disagree on {first!r}"
            )
    return Convergence(True)


def _dots_json(dots: Iterable[Dot]) -> list:
    return [[d.actor.hex(), d.event] for d in sorted(dots)]


def _element(i: int) -> bytes:
    return b"e%03d" % i


class _Sim:
    def __init__(self, cfg: ScenarioConfig, replica_factory: Callable[[bytes], Replica], op_limit: int):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        # Separate streams so compaction and read rates never perturb the op schedule.
        self.compact_rng = random.Random(f"compact-{cfg.seed}")
        self.read_rng = random.Random(f"read-{cfg.seed}")
        self.op_limit = op_limit
        self.replicas = [replica_factory(b"r%d" % i) for i in range(cfg.n_replicas)]
        self.oracles = [Orswot() for _ in range(cfg.n_replicas)]
        self.session = ClientSession(cfg.n_replicas, cfg.session_policy)
        self.queue: list = []
        self.seq = 0
        self.msg_id = 0
        self.trace: list[dict] = []
        self.failures: list[str] = []
        self.quorum_reads = 0
        self.compactions = 0

    def fail(self, msg: str) -> None:
        self.failures.append(msg)
        self.trace.append({"kind": "failure", "detail": msg})

    def send(self, t: int, targets: Iterable[int], payload: tuple) -> list:
        cfg, rng = self.cfg, self.rng
        self.msg_id += 1
        schedule = []
        for j in targets:
            first = t + rng.randint(1, cfg.reorder_window)
            if rng.random() < cfg.drop_rate:
                schedule.append([j, first, "drop"])
                first = t + cfg.reorder_window + rng.randint(1, cfg.reorder_window)
            schedule.append([j, first, "deliver"])
            if rng.random() < cfg.duplicate_rate:
                schedule.append([j, t + rng.randint(1, 2 * cfg.reorder_window), "duplicate"])
        for j, when, what in schedule:
            if what != "drop":
                self.seq += 1
                heapq.heappush(self.queue, (when, self.seq, j, self.msg_id, payload))
        return schedule

    def deliver_until(self, t: int | None) -> None:
        while self.queue and (t is None or self.queue[0][0] < t):
            when, _, j, mid, payload = heapq.heappop(self.queue)
            kind = payload[0]
            if kind == "delta":
                _, wire, odelta = payload
                self.replicas[j].apply_delta(decode_delta(wire))
            else:
                _, element, ctx, odelta = payload
                self.replicas[j].remove(SET, element, ctx)
            self.oracles[j] = orswot_delta_join(self.oracles[j], odelta)
            self.trace.append({"kind": "deliver", "t": when, "msg": mid, "to": j})

    def context(self, a: int, element: bytes) -> frozenset[Dot]:
        ctx = self.replicas[a].is_member(SET, element).context
        expected = self.oracles[a].entries.get(element, frozenset())
        if ctx != expected:
            self.fail(f"context for {element!r} at r{a}: bigset {sorted(ctx)} vs oracle {sorted(expected)}")
        return ctx

    def step(self, i: int) -> None:
        cfg, rng = self.cfg, self.rng
        t = i
        self.deliver_until(t)
        element = _element(rng.randrange(cfg.universe))
        a, b = self.session.pick(rng)
        others = [j for j in range(cfg.n_replicas) if j != b]
        rec = {"kind": "op", "op": i, "t": t, "element": element.decode(), "ctx_from": a, "coord": b}
        if rng.random() < cfg.remove_rate:
            ctx = self.context(a, element)
            self.replicas[b].remove(SET, element, ctx)
            odelta = orswot_delta_remove(self.oracles[b], element, ctx)
            self.oracles[b] = orswot_delta_join(self.oracles[b], odelta)
            rec.update(type="remove", ctx=_dots_json(ctx))
            rec["deliveries"] = self.send(t, others, ("remove", element, ctx, odelta))
        else:
            blind = rng.random() < cfg.blind_add_rate
            ctx = frozenset() if blind else self.context(a, element)
            delta = self.replicas[b].coordinate_insert(SET, element, ctx)
            odelta = orswot_delta_add(self.oracles[b], self.replicas[b].actor, element, ctx)
            if odelta.entries[element] != {delta.dot}:
                self.fail(f"op {i}: bigset minted {delta.dot}, oracle minted {sorted(odelta.entries[element])}")
            self.oracles[b] = orswot_delta_join(self.oracles[b], odelta)
            rec.update(type="add", blind=blind, ctx=_dots_json(ctx), dot=_dots_json([delta.dot]))
            rec["deliveries"] = self.send(t, others, ("delta", encode_delta(delta), odelta))
        self.trace.append(rec)
        if self.compact_rng.random() < cfg.compact_rate:
            j = self.compact_rng.randrange(cfg.n_replicas)
            report = self.replicas[j].compact_set(SET)
            self.compactions += 1
            self.trace.append({"kind": "compact", "t": t, "replica": j, "dropped": len(report.dropped)})
        if self.read_rng.random() < cfg.read_rate:
            self.quorum_read(self.read_rng.sample(range(cfg.n_replicas), cfg.read_quorum), t)

    def quorum_read(self, chosen: Sequence[int], t) -> list[bytes]:
        self.quorum_reads += 1
        merged = merge_streams([replica_stream(self.replicas[j], SET, self.cfg.batch_size) for j in chosen],
                               self.cfg.batch_size)
        got = dict(merged.elements())
        want = merge_all(self.oracles[j] for j in chosen)
        if got != dict(want.entries) or merged.clock != want.clock:
            self.fail(f"quorum read over {list(chosen)} at t={t}: merged {sorted(got)} vs oracle {orswot_value(want)}")
        if merged.peak_buffered > len(chosen):
            self.fail(f"quorum read buffered {merged.peak_buffered} elements for {len(chosen)} streams")
        self.trace.append({"kind": "quorum_read", "t": t, "replicas": list(chosen), "value": [e.decode() for e in got]})
        return sorted(got)

    def run(self) -> ScenarioResult:
        cfg = self.cfg
        try:
            for i in range(self.op_limit):
                self.step(i)
            self.deliver_until(None)
            self.finish()
        except Exception as exc:  # report, never crash the sweep
            self.fail(f"{type(exc).__name__}: {exc}")
        oracle_value = orswot_value(merge_all(self.oracles))
        values = []
        for r in self.replicas:
            try:
                values.append(r.value(SET))
            except Exception as exc:
                values.append([])
                self.fail(f"read at {r.actor!r} failed: {exc}")
        return ScenarioResult(
            config=cfg,
            values=values,
            oracle_value=oracle_value,
            metrics=[r.store.metrics() for r in self.replicas],
            trace=self.trace,
            failures=list(self.failures),
            quorum_reads=self.quorum_reads,
            compactions=self.compactions,
        )

    def finish(self) -> None:
        conv = check_convergence(self.replicas)
        if not conv.ok:
            self.fail(f"divergence: {conv.detail}")
        oracle = merge_all(self.oracles)
        for j, r in enumerate(self.replicas):
            state = r.state(SET)
            if state != self.oracles[j]:
                self.fail(f"r{j} state {orswot_value(state)} differs from its shadow {orswot_value(self.oracles[j])}")
            if orswot_value(state) != orswot_value(oracle):
                self.fail(f"r{j} value {orswot_value(state)} differs from oracle {orswot_value(oracle)}")
        self.quorum_read(range(self.cfg.n_replicas), "end")


def run_scenario(
    cfg: ScenarioConfig,
    replica_factory: Callable[[bytes], Replica] = Replica,
    shrink: bool = True,
) -> ScenarioResult:
    result = _Sim(cfg, replica_factory, cfg.op_count).run()
    if result.failures and shrink:
        # Same seed, fewer ops: every prefix replays the same first operations.
        for k in range(1, cfg.op_count + 1):
            smaller = _Sim(cfg, replica_factory, k).run()
            if smaller.failures:
                result.minimized_trace = smaller.trace
                break
    return result


def dump_trace(trace: Iterable[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bigset-sim", description="Run seeded bigset cluster scenarios.")
    p.add_argument("--config", help="file of key=value lines (flags override it)")
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int, default=1, help="consecutive seeds to run")
    p.add_argument("--replicas", dest="n_replicas", type=int)
    p.add_argument("--ops", dest="op_count", type=int)
    p.add_argument("--universe", type=int)
    p.add_argument("--remove-rate", type=float)
    p.add_argument("--duplicate-rate", type=float)
    p.add_argument("--reorder-window", type=int)
    p.add_argument("--drop-rate", type=float)
    p.add_argument("--compact-rate", type=float)
    p.add_argument("--quorum", dest="read_quorum", type=int)
    p.add_argument("--policy", dest="session_policy", choices=POLICIES)
    p.add_argument("--trace", help="write the line-delimited trace of the last (or first failing) run")
    return p


_CFG_FLAGS = ("seed", "n_replicas", "op_count", "universe", "remove_rate", "duplicate_rate",
              "reorder_window", "drop_rate", "compact_rate", "read_quorum", "session_policy")


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    text = ""
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    overrides = {k: getattr(args, k) for k in _CFG_FLAGS}
    base = ScenarioConfig.from_text(text, **overrides)
    failed = 0
    last = None
    for n in range(args.runs):
        cfg = ScenarioConfig.from_text(text, **{**overrides, "seed": base.seed + n})
        last = run_scenario(cfg)
        status = "ok" if last.ok else "FAIL"
        print(f"seed={cfg.seed} {status} value={len(last.oracle_value)} elements "
              f"quorum_reads={last.quorum_reads} compactions={last.compactions}")
        if not last.ok:
            failed += 1
            for f in last.failures:
                print(f"  {f}")
            if args.trace:
                dump_trace(last.minimized_trace or last.trace, args.trace)
            break
    else:
        if args.trace and last is not None:
            dump_trace(last.trace, args.trace)
    print(f"{args.runs if not failed else n + 1} run(s), {failed} failure(s)")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

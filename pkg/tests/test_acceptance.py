"""One test per acceptance criterion, each at its stated scale and tolerance."""

import itertools
import random
import time

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from bigset.bench import (
    BIGSET_EXPONENT,
    FULLSTATE_EXPONENT,
    Workload,
    compare_modes,
    growth_exponent,
    main as bench_main,
    per_insert,
    run_bench,
)
from bigset.clock import Dot, LogicalClock
from bigset.merge_stream import merge_streams, replica_stream
from bigset.orswot_ref import encode_orswot, merge_all
from bigset.replica import Replica
from bigset.simnet import ScenarioConfig, run_scenario
from bigset.store import decode_key, element_key, encode_key
from bigset.store.keys import BigsetKey, Kind

from helpers import dot_model, dots

S = b"s"
MANY = settings(max_examples=1000, deadline=None, derandomize=True, database=None,
                suppress_health_check=[HealthCheck.too_slow])


def random_replicas(rng: random.Random, n: int, ops: int, elements: int = 6) -> tuple[list[Replica], list]:
    """Replicas diverged by random adds, removes and partial delta delivery."""
    replicas = [Replica(b"r%d" % i) for i in range(n)]
    pending = []
    for _ in range(ops):
        i = rng.randrange(n)
        r = replicas[i]
        e = b"e%d" % rng.randrange(elements)
        roll = rng.random()
        if roll < 0.5:
            ctx = r.is_member(S, e).context if rng.random() < 0.9 else ()
            d = r.coordinate_insert(S, e, ctx)
            pending += [(j, d) for j in range(n) if j != i]
        elif roll < 0.75:
            r.remove(S, e, r.is_member(S, e).context)
        elif pending:
            j, d = pending.pop(rng.randrange(len(pending)))
            replicas[j].apply_delta(d)
    return replicas, pending


def test_criterion_1_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    failures = []
    runs = 1000
    for seed in range(runs):
        cfg = ScenarioConfig(seed=seed, n_replicas=3, op_count=200, duplicate_rate=0.1, reorder_window=8)
        res = run_scenario(cfg)
        if not res.ok or any(v != res.oracle_value for v in res.values):
            failures.append((seed, res.failures[:2]))
    elapsed = time.perf_counter() - t0
    verdict(1, not failures and elapsed < 60,
            f"{runs} scenarios, {len(failures)} failures, {elapsed:.1f}s (target < 60s) {failures[:3]}")


def test_criterion_2_write_cost_scaling(verdict):
    ns = [500, 1000, 2000, 4000]
    reports = {(m, n): run_bench(Workload(m, n)) for m in ("fullstate", "bigset") for n in ns}
    full = growth_exponent(ns, [reports["fullstate", n].bytes_written for n in ns])
    big = growth_exponent(ns, [reports["bigset", n].bytes_written for n in ns])
    ratio = per_insert(reports["bigset", 4000], 4000) / per_insert(reports["bigset", 500], 500)
    ok = (FULLSTATE_EXPONENT[0] <= full <= FULLSTATE_EXPONENT[1]
          and BIGSET_EXPONENT[0] <= big <= BIGSET_EXPONENT[1] and ratio <= 2)
    verdict(2, ok, f"fullstate exponent {full:.3f}, bigset exponent {big:.3f}, "
                   f"bigset per-insert n=4000/n=500 = {ratio:.3f}")


def test_criterion_3_per_op_read_bound(verdict):
    worst = {"coordinate_insert": 0, "apply_delta": 0, "remove": 0}
    rng = random.Random(3)
    for n in (0, 10, 1000, 5000):
        a, b = Replica(b"a"), Replica(b"b")
        for d in a.coordinate_insert_many(S, [(b"%06d" % i, ()) for i in range(n)]):
            b.apply_delta(d)
        for _ in range(200):
            e = b"%06d" % rng.randrange(n + 5)
            ctx = a.is_member(S, e).context

            def reads(r, fn):
                before = r.store.metrics().keys_read
                out = fn()
                return r.store.metrics().keys_read - before, out

            k, delta = reads(a, lambda: a.coordinate_insert(S, e, ctx))
            worst["coordinate_insert"] = max(worst["coordinate_insert"], k)
            for _ in range(2):  # fresh, then duplicate
                k, _ = reads(b, lambda: b.apply_delta(delta))
                worst["apply_delta"] = max(worst["apply_delta"], k)
            k, _ = reads(a, lambda: a.remove(S, e, {delta.dot}))
            worst["remove"] = max(worst["remove"], k)
    verdict(3, max(worst.values()) <= 2, f"max keys_read per op {worst}")


def test_criterion_4_compaction(verdict):
    bad = []
    seeds = 500
    for seed in range(seeds):
        rng = random.Random(seed)
        replicas, pending = random_replicas(rng, 3, rng.randrange(10, 60))
        for j, d in pending[: len(pending) // 2]:
            replicas[j].apply_delta(d)
        for r in replicas:
            before = r.state(S)
            r.compact_set(S)
            if r.state(S) != before:
                bad.append((seed, "value changed"))
            for e in r.value(S):
                r.remove(S, e, r.is_member(S, e).context)
            r.compact_set(S)
            if r.element_keys(S) or not r.clocks(S)[1].is_empty():
                bad.append((seed, "residue after remove-all"))
            r.check_invariants(S)
    verdict(4, not bad, f"{seeds} seeds, {len(bad)} failures {bad[:3]}")


def test_criterion_5_streaming_merge(verdict):
    bad = []
    peak_ok = True
    cases = 1000
    for seed in range(cases):
        rng = random.Random(10_000 + seed)
        n = 2 + seed % 2
        replicas, _ = random_replicas(rng, n, rng.randrange(0, 40))
        if rng.random() < 0.5:
            rng.choice(replicas).compact_set(S)
        merged = merge_streams([replica_stream(r, S, rng.randrange(1, 4)) for r in replicas],
                               rng.randrange(1, 4))
        got = dict(merged.elements())
        want = merge_all(r.state(S) for r in replicas)
        if got != dict(want.entries) or merged.clock != want.clock:
            bad.append(seed)
        peak_ok &= merged.peak_buffered <= n
    verdict(5, not bad and peak_ok, f"{cases} tuples, {len(bad)} mismatches, peak within stream count: {peak_ok}")


def test_criterion_6_delta_order_and_duplicates(verdict):
    bad = []
    multisets = 500
    for seed in range(multisets):
        rng = random.Random(20_000 + seed)
        sources = [Replica(b"a"), Replica(b"b")]
        deltas = []
        for _ in range(rng.randrange(1, 7)):
            src = rng.choice(sources)
            e = b"e%d" % rng.randrange(3)
            d = src.coordinate_insert(S, e, src.is_member(S, e).context if rng.random() < 0.8 else ())
            deltas.append(d)
            if rng.random() < 0.5:
                other = sources[1 - sources.index(src)]
                other.apply_delta(d)
        outcomes = set()
        perms = list(itertools.islice(itertools.permutations(deltas), 30))
        for perm in perms + [tuple(reversed(deltas))]:
            order = list(perm) + [rng.choice(deltas) for _ in range(rng.randrange(1, 3))]
            rng.shuffle(order)
            r = Replica(b"z")
            for d in order:
                r.apply_delta(d)
            outcomes.add(encode_orswot(r.state(S)))
        if len(outcomes) != 1:
            bad.append(seed)
    verdict(6, not bad, f"{multisets} delta multisets, {len(bad)} with order-dependent reads")


clock_ops = st.lists(st.tuples(st.sampled_from(["add", "sub", "join"]), dots, st.frozensets(dots, max_size=6)),
                     max_size=12)


def test_criterion_7_clock_laws(verdict):
    counts = {"join laws": 0, "add/subtract inverse": 0, "canonical after every op": 0}
    cl = st.frozensets(dots, max_size=20).map(LogicalClock.from_dots)

    @MANY
    @given(cl, cl, cl)
    def join_laws(x, y, z):
        counts["join laws"] += 1
        assert x.join(y) == y.join(x)
        assert x.join(y).join(z) == x.join(y.join(z))
        assert x.join(x) == x

    @MANY
    @given(cl, dots)
    def inverse(c, d):
        counts["add/subtract inverse"] += 1
        c = c.subtract_dot(d)
        assert dot_model(c.add_dot(d).subtract_dot(d)) == dot_model(c)
        assert c.add_dot(d).subtract_dot(d) == c

    @MANY
    @given(clock_ops)
    def canonical(ops):
        counts["canonical after every op"] += 1
        c = LogicalClock()
        for op, d, others in ops:
            c = c.add_dot(d) if op == "add" else c.subtract_dot(d) if op == "sub" else c.join(
                LogicalClock.from_dots(others))
            assert c.is_compressed()
            assert c == LogicalClock.from_dots(dot_model(c))

    failed = []
    for prop in (join_laws, inverse, canonical):
        try:
            prop()
        except AssertionError as exc:
            failed.append(f"{prop.__name__}: {exc}")
    enough = all(v >= 1000 for v in counts.values())
    verdict(7, not failed and enough, f"cases per property {counts}; failures {failed}")


def _field(rng: random.Random) -> bytes:
    return bytes(rng.choice(b"\x00\x01a\xfe\xff") for _ in range(rng.randrange(4)))


def _random_key(rng: random.Random) -> BigsetKey:
    s = _field(rng)
    kind = rng.choice([Kind.CLOCK, Kind.TOMBSTONE, Kind.ELEMENT, Kind.ELEMENT])
    if kind != Kind.ELEMENT:
        return BigsetKey(s, kind)
    actor = _field(rng) or b"\x00"
    return element_key(s, _field(rng), Dot(actor, rng.choice([1, 2, 255, 256, 2**40, 2**64 - 1])))


def _extend(rng: random.Random, k: BigsetKey) -> BigsetKey:
    # A key whose fields extend k's, to exercise prefix relationships.
    if k.kind != Kind.ELEMENT:
        return BigsetKey(k.set + _field(rng), k.kind)
    return element_key(k.set, k.element + _field(rng), Dot(k.dot.actor + _field(rng), k.dot.event))


def test_criterion_8_key_codec(verdict):
    rng = random.Random(8)
    pairs = 100_000
    order_bad = trip_bad = 0
    for i in range(pairs):
        k1 = _random_key(rng)
        k2 = _extend(rng, k1) if i % 3 == 0 else _random_key(rng)
        e1, e2 = encode_key(k1), encode_key(k2)
        t1, t2 = k1.sort_key(), k2.sort_key()
        order_bad += ((t1 > t2) - (t1 < t2)) != ((e1 > e2) - (e1 < e2))
        trip_bad += decode_key(e1) != k1 or decode_key(e2) != k2
    verdict(8, order_bad == 0 and trip_bad == 0,
            f"{pairs} pairs, {order_bad} order mismatches, {trip_bad} round-trip failures")


def test_criterion_9_trend_direction(verdict, capsys):
    code = bench_main(["--mode", "all", "--cardinality", "5000,10000", "--assert-trends"])
    out = capsys.readouterr().out
    lines = [ln for ln in out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    wanted = ("fullstate per-insert cost rising", "bigset per-insert cost flat", "full-read bytes_read")
    ok = code == 0 and all(any(w in ln and ln.startswith("PASS") for ln in lines) for w in wanted)
    verdict(9, ok, "; ".join(lines))

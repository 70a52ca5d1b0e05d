"""Shared hypothesis strategies and brute-force oracles for the test suite."""

from __future__ import annotations

from hypothesis import strategies as st

from bigset.clock import Dot, LogicalClock
from bigset.orswot_ref import Orswot, orswot_add, orswot_merge, orswot_remove

ACTORS = [b"a", b"b", b"c"]

dots = st.builds(Dot, st.sampled_from(ACTORS), st.integers(1, 12))
dot_sets = st.frozensets(dots, max_size=20)
clocks = dot_sets.map(LogicalClock.from_dots)


def dot_model(clock: LogicalClock, horizon: int = 14) -> frozenset[Dot]:
    """The seen() predicate as an explicit dot set, up to ``horizon`` per actor."""
    return frozenset(Dot(a, e) for a in ACTORS for e in range(1, horizon + 1) if clock.seen(Dot(a, e)))


@st.composite
def orswot_histories(draw, n_replicas: int = 2, max_ops: int = 12, elements: int = 4):
    """Independent replica states built by random adds, removes and merges."""
    states = [Orswot() for _ in range(n_replicas)]
    for _ in range(draw(st.integers(0, max_ops))):
        i = draw(st.integers(0, n_replicas - 1))
        op = draw(st.sampled_from(["add", "add", "remove", "merge"]))
        e = b"e%d" % draw(st.integers(0, elements - 1))
        if op == "add":
            states[i] = orswot_add(states[i], ACTORS[i], e)
        elif op == "remove":
            states[i] = orswot_remove(states[i], e)
        else:
            j = draw(st.integers(0, n_replicas - 1))
            states[i] = orswot_merge(states[i], states[j])
    return states

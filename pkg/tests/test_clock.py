import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bigset.clock import MAX_EVENT, ContractError, Dot, LogicalClock

from helpers import ACTORS, clocks, dot_model, dot_sets, dots

A, B, C = ACTORS


def lc(base=None, cloud=None):
    return LogicalClock(base, cloud)


def test_increment_examples():
    assert lc({A: 2}).increment(A) == (lc({A: 3}), Dot(A, 3))
    assert lc().increment(A) == (lc({A: 1}), Dot(A, 1))
    assert lc({A: 1, B: 7}).increment(B) == (lc({A: 1, B: 8}), Dot(B, 8))


def test_increment_with_cloud_residue_is_contract_error():
    with pytest.raises(ContractError):
        lc({A: 1}, {A: [3]}).increment(A)


def test_add_dot_examples():
    assert lc({A: 2}, {A: [4, 5]}).add_dot(Dot(A, 3)) == lc({A: 5})
    assert lc({A: 2}).add_dot(Dot(A, 7)) == lc({A: 2}, {A: [7]})
    assert lc({A: 5}).add_dot(Dot(A, 3)) == lc({A: 5})


def test_join_examples():
    assert lc({A: 3}).join(lc({A: 1, B: 2})) == lc({A: 3, B: 2})
    assert lc({A: 2}).join(lc(cloud={A: [3]})) == lc({A: 3})


def test_subtract_dot_examples():
    assert lc({A: 5}).subtract_dot(Dot(A, 3)) == lc({A: 2}, {A: [4, 5]})
    assert lc({A: 2}, {A: [7]}).subtract_dot(Dot(A, 7)) == lc({A: 2})
    assert lc({A: 2}).subtract_dot(Dot(A, 9)) == lc({A: 2})


def test_dominates_examples():
    assert lc({A: 5}).dominates(lc({A: 3}))
    assert not lc({A: 5}).dominates(lc(cloud={B: [1]}))


def test_constructor_compresses():
    c = lc({A: 1}, {A: [2, 3, 5], B: [1, 2]})
    assert c.base == {A: 3, B: 2}
    assert c.cloud == {A: frozenset({5})}
    assert c.is_compressed()


def test_invalid_values_rejected():
    with pytest.raises(ContractError):
        Dot(A, 0)
    with pytest.raises(ContractError):
        Dot(A, MAX_EVENT + 1)
    with pytest.raises(ContractError):
        Dot(b"", 1)
    with pytest.raises(ContractError):
        lc({A: -1})
    with pytest.raises(ContractError):
        lc(cloud={A: [0]})


def test_golden_bytes():
    c = lc({A: 2}, {A: [4], B: [3]})
    expected = bytes.fromhex(
        "00000002"
        "00000001" "61" "0000000000000002" "00000001" "0000000000000004"
        "00000001" "62" "0000000000000000" "00000001" "0000000000000003"
    )
    assert c.to_bytes() == expected
    assert LogicalClock.from_bytes(expected) == c
    assert lc().to_bytes() == b"\x00\x00\x00\x00"


@pytest.mark.parametrize("blob", [
    b"\x00\x00",
    bytes.fromhex("00000001" "00000001" "61" "0000000000000002" "00000001" "0000000000000003"),  # not compressed
    bytes.fromhex("00000002" "00000001" "62" "0000000000000001" "00000000"
                  "00000001" "61" "0000000000000001" "00000000"),  # actors out of order
    bytes.fromhex("00000000" "00"),  # trailing byte
])
def test_from_bytes_rejects_malformed(blob):
    with pytest.raises(ValueError):
        LogicalClock.from_bytes(blob)


@settings(max_examples=200)
@given(clocks, clocks)
def test_join_is_union_of_seen(x, y):
    assert dot_model(x.join(y)) == dot_model(x) | dot_model(y)
    assert x.join(y).is_compressed()


@settings(max_examples=200)
@given(clocks, clocks, clocks)
def test_join_laws(x, y, z):
    assert x.join(y) == y.join(x)
    assert x.join(y).join(z) == x.join(y.join(z))
    assert x.join(x) == x


@settings(max_examples=200)
@given(dot_sets, dots)
def test_add_subtract_inverse_on_unseen(ds, d):
    c = LogicalClock.from_dots(ds - {d})
    added = c.add_dot(d)
    assert added.seen(d) and added.is_compressed()
    back = added.subtract_dot(d)
    assert back == c and back.is_compressed()


@settings(max_examples=200)
@given(dot_sets, dots)
def test_subtract_only_forgets_that_dot(ds, d):
    c = LogicalClock.from_dots(ds)
    assert dot_model(c.subtract_dot(d)) == dot_model(c) - {d}


@settings(max_examples=200)
@given(clocks, clocks)
def test_dominates_matches_model(x, y):
    assert x.dominates(y) == (dot_model(y) <= dot_model(x))
    assert x.join(y).dominates(x)


@settings(max_examples=200)
@given(dot_sets)
def test_canonical_form_is_unique(ds):
    # Equal seen predicates give structurally equal clocks and equal bytes.
    one = LogicalClock.from_dots(ds)
    two = LogicalClock()
    for d in sorted(ds, reverse=True):
        two = two.add_dot(d)
    assert one == two and one.to_bytes() == two.to_bytes() and hash(one) == hash(two)
    assert set(one.dots()) == set(ds)
    assert one.dot_count() == len(ds)


@settings(max_examples=200)
@given(clocks, st.sampled_from(ACTORS))
def test_increment_never_leaves_own_cloud(c, actor):
    c = c.join(LogicalClock.from_dots(Dot(actor, e) for e in range(1, max(c.base.get(actor, 0), 12) + 1)))
    c2, dot = c.increment(actor)
    assert actor not in c2.cloud
    assert not c.seen(dot) and c2.seen(dot)


@settings(max_examples=200)
@given(clocks)
def test_bytes_round_trip(c):
    assert LogicalClock.from_bytes(c.to_bytes()) == c

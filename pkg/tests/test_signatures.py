import json

import pytest
from hypothesis import given, strategies as st

from oracles import brute_interval
from padic_sea.signatures import (INF, NEG_INF, WindowSignature, conjugate, flat, from_conjugate, iota,
                                  parse_part, skew_contains, skew_size, interval_states, truncate_Fd)

W = WindowSignature


def test_extended_order():
    assert NEG_INF < -10 ** 9 < 0 < 10 ** 9 < INF
    assert sorted([3, INF, NEG_INF, -1]) == [NEG_INF, -1, 3, INF]
    assert parse_part("inf") is INF and parse_part("-inf") is NEG_INF and parse_part(float("-inf")) is NEG_INF


@pytest.mark.parametrize("sig,d,expected", [
    ((3, 1, 1, 0), 3, (3, 1, 1)),
    ((), 5, (0, 0, 0, 0, 0)),
    ((INF, 2, 0), 4, (2, 2, 1, 1)),
])
def test_conjugate_examples(sig, d, expected):
    assert conjugate(sig, d) == expected


def test_truncate_examples():
    assert truncate_Fd((5, 2, NEG_INF), 3) == (3, 2, NEG_INF)
    assert truncate_Fd((0, 0), 0) == (0, 0)
    assert truncate_Fd(truncate_Fd((7, 4, 1), 5), 2) == (2, 2, 1)
    ws = W(-2, (5, 3, 1), INF, NEG_INF)
    assert truncate_Fd(ws, 2) == W(-2, (2, 2, 1), 2, NEG_INF)


def test_skew_examples():
    assert skew_contains((1, 0), (2, 0)) and skew_size((1, 0), (2, 0)) == 1
    assert skew_size((INF, 1), (INF, 2)) == 1
    assert not skew_contains((1, 1), (2, 0))
    with pytest.raises(ValueError):
        skew_size((1, 1), (2, 0))
    assert skew_size(flat(0), flat(1)) is INF


def test_interval_examples():
    assert set(interval_states((0, 0), (1, 0))) == {(0, 0), (1, 0)}
    assert set(interval_states((0, 0), (1, 1))) == {(0, 0), (1, 0), (1, 1)}
    assert interval_states((2, 1), (2, 1)) == [(2, 1)]
    with pytest.raises(ValueError):
        interval_states(flat(0), flat(1))


def test_window_canonical_form():
    a = W(0, (INF, INF, 3, 1, NEG_INF), INF, NEG_INF)
    assert a == W(2, (3, 1))
    assert a[1] is INF and a[2] == 3 and a[4] is NEG_INF
    assert flat(0) == W(5, (0, 0), 0, 0)
    with pytest.raises(ValueError):
        W(0, (1, 2))
    with pytest.raises(ValueError):
        W(0, (5,), 3, NEG_INF)


def test_iota_and_shift():
    x = iota((4, 2, 0))
    assert [x[i] for i in range(-1, 6)] == [INF, INF, 4, 2, 0, NEG_INF, NEG_INF]
    y = x.shift(2)
    assert all(y[n] == x[n + 2] for n in range(-5, 8))
    assert x.shift(0) == x


def test_json_roundtrip():
    ws = W(-3, (5, 2, 2, 0), INF, NEG_INF)
    enc = json.dumps(ws.to_json())
    assert json.loads(enc)["left"] == "inf"
    assert W.from_json(json.loads(enc)) == ws


sigs = st.lists(st.integers(0, 6), max_size=7).map(lambda xs: tuple(sorted(xs, reverse=True)))


@given(sigs, st.integers(1, 7))
def test_conjugate_inverts_on_levels(sig, d):
    assert from_conjugate(conjugate(sig, d), len(sig)) == truncate_Fd(sig, d)


@given(sigs, st.integers(0, 7), st.integers(0, 7))
def test_truncate_idempotent_and_composes(sig, a, b):
    assert truncate_Fd(truncate_Fd(sig, a), a) == truncate_Fd(sig, a)
    assert truncate_Fd(truncate_Fd(sig, a), b) == truncate_Fd(sig, min(a, b))


@st.composite
def nested_pair(draw):
    n = draw(st.integers(1, 5))
    base = sorted(draw(st.lists(st.integers(0, 4), min_size=n, max_size=n)), reverse=True)
    extra = draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
    top = [base[0] + extra[0]]
    for b, e in zip(base[1:], extra[1:]):
        top.append(min(top[-1], b + e))
    return tuple(base), tuple(top)


@given(nested_pair(), st.integers(0, 5))
def test_truncate_monotone(pair, d):
    nu, kappa = pair
    assert skew_contains(nu, kappa)
    assert skew_contains(truncate_Fd(nu, d), truncate_Fd(kappa, d))


@given(nested_pair(), st.integers(-3, 3), st.sampled_from([INF, 6]))
def test_interval_matches_brute_force(pair, offset, left):
    nu, kappa = pair
    a, b = W(offset, nu, left, NEG_INF), W(offset, kappa, left, NEG_INF)
    got = interval_states(a, b)
    assert len(got) == len(set(got))
    assert set(got) == brute_interval(a, b)
    assert all(skew_contains(a, s) and skew_contains(s, b) for s in got)


def test_interval_cardinality_exhaustive_small():
    # every interval of skew size <= 4 inside signatures of length 3 with parts <= 3
    import itertools
    all_sigs = [s for s in itertools.product(range(4), repeat=3) if list(s) == sorted(s, reverse=True)]
    checked = 0
    for nu in all_sigs:
        for kappa in all_sigs:
            if skew_contains(nu, kappa) and skew_size(nu, kappa) <= 4:
                a, b = W(1, nu, INF, NEG_INF), W(1, kappa, INF, NEG_INF)
                assert set(interval_states(a, b)) == brute_interval(a, b)
                checked += 1
    assert checked > 50

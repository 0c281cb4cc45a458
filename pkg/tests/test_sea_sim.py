import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from padic_sea.ensembles import RngHandle
from padic_sea.sea_sim import (ClockStreams, TruncState, Trajectory, UntruncatableState, _truncated_geometric,
                               approx_2inf, shift_stationarity_check, simulate_edge, simulate_finite,
                               simulate_truncated)
from padic_sea.signatures import INF, NEG_INF, WindowSignature, flat

HALF = 0.5


class ScriptedClocks:
    """Clock stand-in: clock ``i`` rings once at ``rings[i]``, never otherwise."""

    def __init__(self, rings, t=HALF):
        self.rings, self.t, self.cut = rings, t, 10 ** 6

    def ring_time(self, i, j):
        return self.rings.get(i, math.inf) if j == 0 else math.inf


def test_single_walker_is_poisson():
    n, T = 4000, 4.0
    finals = [simulate_finite((0,), 1, HALF, T, ClockStreams(HALF, 1, s, horizon=T)).final_state()[0]
              for s in range(n)]
    mean = np.mean(finals)
    assert abs(mean - HALF * T) < 3 * math.sqrt(HALF * T / n)


def test_first_jump_of_top_walker_rate():
    # both clocks move S_1 first (walker 2 donates to the block top)
    times = []
    for s in range(3000):
        traj = simulate_finite((0, 0), 2, HALF, 60.0, ClockStreams(HALF, 2, s, horizon=60.0))
        times.append(next(tm for tm, i, v in traj.events if i == 1))
    assert stats.kstest(times, "expon", args=(0, 1 / (HALF + HALF ** 2))).pvalue > 1e-3


def test_block_top_donation():
    clocks = ScriptedClocks({2: 0.1, 4: 0.2})
    traj = simulate_finite((3, 3, 2, -1, -3), 5, HALF, 1.0, clocks)
    assert traj.events == [(0.1, 1, 4), (0.2, 4, 0)]
    assert traj.final_state() == (4, 3, 2, 0, -3)


def test_finite_ordering_and_monotone():
    traj = simulate_finite((2, 1, 1, 0, 0, 0), 6, HALF, 20.0, ClockStreams(HALF, 3, 0, horizon=20.0))
    prev = traj.initial
    for tm, _, _ in traj.events:
        cur = traj.state_at(tm)
        assert all(a >= b for a, b in zip(cur, cur[1:]))
        assert all(a >= b for a, b in zip(cur, prev))
        prev = cur
    assert [e[0] for e in traj.events] == sorted(e[0] for e in traj.events)


def test_truncated_holding_time():
    # d = 1, anchor 0, flat 0 tail: leave state 0 at rate t / (1 - t)
    init = TruncState.from_window(WindowSignature(1, (), 1, 0), 1)
    assert init.anchor == 0 and init.total_rate(HALF) == pytest.approx(1.0)
    first = []
    for s in range(3000):
        traj = simulate_truncated(init, HALF, 50.0, RngHandle(4, s), max_events=10)
        first.append(traj.events[0][0])
    assert stats.kstest(first, "expon", args=(0, (1 - HALF) / HALF)).pvalue > 1e-3


def test_truncated_caps_and_order():
    init = TruncState.from_window(WindowSignature(-2, (3, 1, 1, 0), INF, 0), 2)
    traj = simulate_truncated(init, HALF, 5.0, RngHandle(5))
    assert all(v <= 2 for _, _, v in traj.events)
    st = init.copy()
    for _, i, v in traj.events:
        st.set_value(i, v)
        st.check()


def test_untruncatable():
    with pytest.raises(UntruncatableState):
        TruncState.from_window(flat(0), 1)
    with pytest.raises(UntruncatableState):
        simulate_truncated(None, HALF, 1.0, RngHandle(1))


@given(st.integers(-5, 5), st.lists(st.integers(0, 6), min_size=1, max_size=3), st.booleans(),
       st.sampled_from([0.3, 0.5, 0.8]))
def test_rate_bookkeeping(anchor, gaps, finite, t):
    d = len(gaps)
    counts = list(np.cumsum(gaps[::-1])[::-1] + anchor)
    counts[-1] = anchor
    counts = sorted(counts, reverse=True)
    last = counts[0] + 2 if finite else None
    st_ = TruncState(d, 0, counts, last)
    assert math.isclose(st_.total_rate(t), st_.total_rate_bruteforce(t), rel_tol=1e-12)


def test_truncated_geometric_law():
    u = np.random.default_rng(0).random(20000)
    g = np.array([_truncated_geometric(x, HALF, 4) for x in u])
    assert g.min() == 0 and g.max() == 3
    expect = np.array([HALF ** k for k in range(4)])
    expect /= expect.sum()
    obs = np.bincount(g, minlength=4)
    assert stats.chisquare(obs, expect * len(g)).pvalue > 1e-3


def test_trajectory_csv_roundtrip():
    init = TruncState.from_window(WindowSignature(-1, (2, 1, 0, 0)), 2)
    traj = simulate_truncated(init, HALF, 3.0, RngHandle(6))
    back = Trajectory.from_csv(traj.to_csv())
    assert back.events == traj.events and back.T == traj.T
    assert back.final_state().counts == traj.final_state().counts
    assert traj.to_csv().splitlines()[1] == "time,index,new_value"
    fin = simulate_finite((1, 0), 2, HALF, 3.0, ClockStreams(HALF, 6))
    assert Trajectory.from_csv(fin.to_csv()).final_state() == fin.final_state()


def test_clock_streams_reproducible():
    a, b = ClockStreams(HALF, 9, 3), ClockStreams(HALF, 9, 3)
    assert [a.ring_time(-5, j) for j in range(20)] == [b.ring_time(-5, j) for j in range(20)]
    assert a.draw(2, 0) != ClockStreams(HALF, 9, 4).draw(2, 0)
    assert all(x > 0 for x in (a.draw(i, j) for i in range(-70, 70, 7) for j in range(40)))


def test_depth_monotone_coupling_small():
    for s in range(100):
        clocks = ClockStreams(HALF, 7, s, horizon=1.0)
        deep = approx_2inf(flat(0), 1, 6, HALF, 1.0, clocks)
        shallow = approx_2inf(flat(0), 1, 5, HALF, 1.0, clocks)
        assert all(deep.value(i) <= shallow.value(i) for i in range(-8, 12))


def test_cap_consistency_same_clocks():
    mu = WindowSignature(-1, (1, 0, 0), INF, 0)
    for s in range(50):
        clocks = ClockStreams(HALF, 8, s, horizon=1.0)
        lo = approx_2inf(mu, 1, 6, HALF, 1.0, clocks)
        hi = approx_2inf(mu, 3, 6, HALF, 1.0, clocks)
        assert [lo.value(i) for i in range(-8, 12)] == [min(hi.value(i), 1) for i in range(-8, 12)]


def test_pinned_start_matches_truncated_engine():
    mu = WindowSignature(-1, (1, 1, 0), INF, 0)
    n = 3000
    a = Counter(approx_2inf(mu, 1, 5, HALF, 1.0, ClockStreams(HALF, 9, s)).counts[0] for s in range(n))
    init = TruncState.from_window(mu, 1)
    b = Counter(simulate_truncated(init, HALF, 1.0, RngHandle(10, s)).final_state().counts[0] for s in range(n))
    for k in set(a) | set(b):
        pa, pb = a[k] / n, b[k] / n
        pool = (pa + pb) / 2
        assert abs(pa - pb) <= 4 * math.sqrt(pool * (1 - pool) * 2 / n) + 1e-12


def test_shift_check_at_time_zero():
    rep = shift_stationarity_check(HALF, 0.0, 1, 6, 20, RngHandle(1))
    assert rep.tv == 0.0 and len(rep.cells) == 1


def test_edge_single_particle():
    n, T = 3000, 1.5
    finals = Counter(simulate_edge((0,), 3, HALF, T, RngHandle(11, s)).final_state().value(0) for s in range(n))
    for k in range(3):
        p = stats.poisson.pmf(k, T)
        assert abs(finals[k] / n - p) <= 3.5 * math.sqrt(p * (1 - p) / n)
    assert finals[3] / n == pytest.approx(stats.poisson.sf(2, T), abs=0.03)


def test_edge_ordering():
    traj = simulate_edge((2, 2, 1, 1, 0, 0), 2, HALF, 2.0, RngHandle(12))
    st_ = traj.initial.copy()
    assert st_.value(1) is NEG_INF
    for _, i, v in traj.events:
        st_.set_value(i, v)
        vals = [st_.value(i) for i in range(-7, 2)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

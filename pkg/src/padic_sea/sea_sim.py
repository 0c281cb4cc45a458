"""Event-driven simulation of the reflecting Poisson walkers.

Walker ``i`` carries an exponential clock of rate ``t^i``.  When it rings the
walker moves up by one, unless it sits level with the walker above it, in
which case the topmost walker of its equal-value block moves instead.

Truncated states are stored in conjugate form (:class:`TruncState`): for each
level ``v`` we keep the last index whose value is at least ``v``.  A jump of
a block top from ``v`` to ``v + 1`` is then a single increment.

Two engines share that state:

* :func:`simulate_truncated` draws the next event from the total active rate
  (closed form) and the ringing index from a truncated geometric law.
* the clock engine behind :func:`approx_2inf` replays per-index clocks from
  :class:`ClockStreams`, so runs at different depths can be coupled pathwise.
"""
from __future__ import annotations

import heapq
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ensembles import RngHandle, as_generator
from .signatures import INF, NEG_INF, WindowSignature, flat, is_finite, truncate_Fd

DEFAULT_DEPTH = 10
DEFAULT_MAX_EVENTS = 1_000_000


class UntruncatableState(ValueError):
    """The state has no coordinate pinned at the cap, so its total rate is infinite."""


@dataclass
class TruncState:
    """``F_d``-truncated configuration in conjugate form.

    ``counts[j]`` is the last index whose value is at least ``base + 1 + j``
    (for ``j = 0 .. d - base - 1``); coordinates up to ``counts[-1]`` (the
    anchor) are frozen at ``d``.  Coordinates after the last count carry the
    value ``base``.  When ``last`` is set, coordinates beyond it are ``-inf``;
    otherwise the configuration ends in an infinite flat tail at ``base``.
    """

    d: int
    base: int
    counts: list
    last: int | None = None

    def __post_init__(self):
        self.counts = [int(c) for c in self.counts]
        if self.base >= self.d or len(self.counts) != self.d - self.base:
            raise ValueError("need base < d and one count per level above base")
        self.check()

    @property
    def anchor(self) -> int:
        return self.counts[-1]

    @property
    def tail_value(self) -> int | None:
        return self.base if self.last is None else None

    @property
    def n_finite(self) -> int | None:
        return self.last

    def check(self) -> None:
        c = self.counts
        for a, b in zip(c, c[1:]):
            if a < b:
                raise AssertionError(f"conjugate counts not decreasing: {c}")
        if self.last is not None and c[0] > self.last:
            raise AssertionError("count beyond the last finite coordinate")

    def copy(self) -> "TruncState":
        return TruncState(self.d, self.base, list(self.counts), self.last)

    def value(self, i: int):
        if self.last is not None and i > self.last:
            return NEG_INF
        if i <= self.counts[-1]:
            return self.d
        # counts are decreasing; count how many are >= i
        k = 0
        for c in self.counts:
            if c >= i:
                k += 1
            else:
                break
        return self.base + k

    def level_count(self, v: int) -> int:
        """Last index whose value is at least ``v`` (for ``base < v <= d``)."""
        return self.counts[v - self.base - 1]

    def ring(self, i: int):
        """Apply a ring of clock ``i``; returns ``(index, new_value)`` or ``None`` if frozen."""
        if i <= self.counts[-1]:
            return None
        if self.last is not None and i > self.last:
            raise ValueError(f"no walker at index {i}")
        v = self.value(i)
        j = v - self.base
        top = self.counts[j] + 1
        self.counts[j] = top
        if j > 0 and self.counts[j - 1] < top:
            raise AssertionError("ordering violated")
        return top, v + 1

    def set_value(self, index: int, new_value: int) -> None:
        """Replay an event produced by :meth:`ring`."""
        j = new_value - self.base - 1
        if self.counts[j] + 1 != index:
            raise ValueError(f"event ({index}, {new_value}) does not fit state {self.counts}")
        self.counts[j] = index

    def total_rate(self, t: float) -> float:
        """``sum`` of ``t^i`` over active indices: ``(t^{a+1} - t^{last+1}) / (1 - t)``."""
        hi = 0.0 if self.last is None else t ** (self.last + 1)
        if self.last is not None and self.last <= self.anchor:
            return 0.0
        return (t ** (self.anchor + 1) - hi) / (1 - t)

    def total_rate_bruteforce(self, t: float) -> float:
        """Same quantity summed term by term (infinite tails summed until terms vanish)."""
        total = 0.0
        i = self.anchor + 1
        while True:
            if self.last is not None and i > self.last:
                break
            term = t ** i
            total += term
            if self.last is None and term < 1e-18 * total:
                total += term * t / (1 - t)
                break
            i += 1
        return total

    def window(self, lo: int, hi: int) -> tuple:
        return tuple(self.value(i) for i in range(lo, hi))

    def to_window(self) -> WindowSignature:
        end = self.last if self.last is not None else self.counts[0]
        lo = self.anchor + 1
        vals = tuple(self.value(i) for i in range(lo, end + 1))
        right = self.base if self.last is None else NEG_INF
        return WindowSignature(lo, vals, self.d, right)

    @classmethod
    def from_window(cls, ws: WindowSignature, d: int) -> "TruncState":
        """Truncate ``ws`` at ``d`` and encode it; needs a coordinate at or above ``d``."""
        w = truncate_Fd(ws, d)
        if w.right >= d:
            raise ValueError("every coordinate is frozen")
        if w.left < d:
            pinned = [i for i in range(w.lo, w.hi) if w[i] >= d]
            if not pinned:
                raise UntruncatableState("untruncatable state: no coordinate pinned at d")
        anchor = w.lo - 1
        for i in range(w.lo, w.hi):
            if w[i] >= d:
                anchor = i
        if is_finite(w.right):
            base, last = int(w.right), None
        else:
            finite = [i for i in range(anchor + 1, w.hi) if is_finite(w[i])]
            if not finite:
                return cls(d, d - 1, [anchor], anchor)
            last = max(finite)
            base = min(int(w[i]) for i in finite)
        counts = []
        for v in range(base + 1, d + 1):
            c = anchor
            for i in range(anchor + 1, w.hi):
                if w[i] >= v:
                    c = i
            counts.append(c)
        return cls(d, base, counts, last)

    def to_json(self) -> dict:
        return {"d": self.d, "base": self.base, "counts": list(self.counts), "last": self.last,
                "window": self.to_window().to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "TruncState":
        return cls(int(obj["d"]), int(obj["base"]), list(obj["counts"]), obj.get("last"))


def state_key(state: TruncState) -> tuple:
    return (state.base, tuple(state.counts), state.last)


@dataclass
class Trajectory:
    """Initial state plus the list of ``(time, index, new_value)`` jump events on ``[0, T]``."""

    initial: object
    events: list = field(default_factory=list)
    T: float = 0.0

    def state_at(self, time: float):
        if isinstance(self.initial, TruncState):
            st = self.initial.copy()
            for tm, i, v in self.events:
                if tm > time:
                    break
                st.set_value(i, v)
            return st
        st = list(self.initial)
        for tm, i, v in self.events:
            if tm > time:
                break
            st[i - 1] = v
        return tuple(st)

    def final_state(self):
        return self.state_at(math.inf)

    def to_csv(self) -> str:
        buf = io.StringIO()
        if isinstance(self.initial, TruncState):
            head = {"kind": "trunc", "initial": self.initial.to_json(), "T": self.T}
        else:
            head = {"kind": "finite", "initial": [int(x) for x in self.initial], "T": self.T}
        buf.write(json.dumps(head, sort_keys=True) + "\n")
        buf.write("time,index,new_value\n")
        for tm, i, v in self.events:
            buf.write(f"{tm!r},{i},{v}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        lines = text.strip().splitlines()
        head = json.loads(lines[0])
        if head["kind"] == "trunc":
            init = TruncState.from_json(head["initial"])
        else:
            init = tuple(head["initial"])
        events = []
        for line in lines[2:]:
            tm, i, v = line.split(",")
            events.append((float(tm), int(i), int(v)))
        return cls(init, events, float(head["T"]))


def _truncated_geometric(u: float, t: float, M) -> int:
    """Inverse CDF of ``P(g) ∝ t^g`` on ``0 <= g < M`` (``M`` may be ``inf``)."""
    tM = 0.0 if M == math.inf else t ** M
    g = math.floor(math.log1p(-u * (1.0 - tM)) / math.log(t))
    if g < 0:
        g = 0
    if M != math.inf and g > M - 1:
        g = int(M) - 1
    return int(g)


def simulate_truncated(init: TruncState, t: float, T: float, rng, *,
                       max_events: int = DEFAULT_MAX_EVENTS, check_every: int = 1000) -> Trajectory:
    """Gillespie simulation of the truncated dynamics on ``[0, T]``.

    Rates are absolute: the walker at index ``i`` rings at rate ``t^i``.
    """
    if init is None or not isinstance(init, TruncState):
        raise UntruncatableState("untruncatable state: use approx_2inf")
    t = float(t)
    gen = as_generator(rng)
    st = init.copy()
    events = []
    now = 0.0
    while True:
        R = st.total_rate(t)
        if R <= 0.0:
            break
        now += gen.standard_exponential() / R
        if now > T:
            break
        M = math.inf if st.last is None else st.last - st.anchor
        i = st.anchor + 1 + _truncated_geometric(gen.random(), t, M)
        ev = st.ring(i)
        events.append((now, ev[0], ev[1]))
        if len(events) % check_every == 0:
            brute = st.total_rate_bruteforce(t)
            if not math.isclose(brute, st.total_rate(t), rel_tol=1e-12):
                raise AssertionError("closed-form rate drifted from the explicit sum")
        if len(events) > max_events:
            raise RuntimeError(f"event budget {max_events} exceeded at time {now:.6g} "
                               f"(total rate {R:.6g})")
    return Trajectory(init.copy(), events, float(T))


class ClockStreams:
    """Reproducible Poisson clocks, one per integer index, with rate ``t^i``.

    Draw ``j`` of clock ``i`` is a standard exponential taken from the
    generator seeded by ``(seed, sample, chunk(i), block(j))``; the ring
    times are the partial sums divided by ``t^i``.  Indices above ``cut`` are
    not tracked one by one: their superposition is produced by one extra
    stream (rate ``sum_{i > cut} t^i``, index drawn from the truncated
    geometric law).  ``cut`` is chosen so that this superposition rings
    before ``horizon`` with probability below ``tail_eps``.
    """

    CHUNK = 64
    BLOCK = 16
    _OFFSET = 2 ** 31
    _TAIL = 2 ** 33

    def __init__(self, t: float, seed: int, sample: int = 0, horizon: float = 1.0,
                 tail_eps: float = 1e-13):
        if not 0 < t < 1:
            raise ValueError("t must lie in (0, 1)")
        self.t = float(t)
        self.seed = int(seed)
        self.sample = int(sample)
        self.horizon = float(horizon)
        lt = math.log(self.t)
        need = math.log(tail_eps * (1 - self.t) / max(self.horizon, 1e-300)) / lt - 1
        self.cut = max(0, int(math.ceil(need)))
        self._blocks: dict = {}
        self._times: dict = {}
        self._tail: list = []
        self._tail_gen = None

    def _block(self, chunk: int, block: int) -> np.ndarray:
        key = (chunk, block)
        arr = self._blocks.get(key)
        if arr is None:
            ss = np.random.SeedSequence([self.seed, self.sample, chunk + self._OFFSET, block])
            arr = np.random.Generator(np.random.PCG64(ss)).standard_exponential((self.CHUNK, self.BLOCK))
            self._blocks[key] = arr
        return arr

    def draw(self, i: int, j: int) -> float:
        """The ``j``-th standard exponential of clock ``i``."""
        chunk, row = divmod(i, self.CHUNK)
        block, col = divmod(j, self.BLOCK)
        return float(self._block(chunk, block)[row, col])

    def ring_time(self, i: int, j: int) -> float:
        """Time of the ``j``-th ring (0-based) of clock ``i``."""
        times = self._times.setdefault(i, [])
        rate = self.t ** i
        while len(times) <= j:
            prev = times[-1] if times else 0.0
            times.append(prev + self.draw(i, len(times)) / rate)
        return times[j]

    def tail_event(self, k: int, last: int | None):
        """``k``-th event ``(time, index)`` of the superposed clocks above ``cut``."""
        if self._tail_gen is None:
            ss = np.random.SeedSequence([self.seed, self.sample, self._TAIL])
            self._tail_gen = np.random.Generator(np.random.PCG64(ss))
            self._tail_last = last
        if last != self._tail_last:
            raise ValueError("tail stream reused with a different last index")
        t = self.t
        lo = self.cut + 1
        M = math.inf if last is None else last - self.cut
        rate = t ** lo * (1 - (0.0 if M == math.inf else t ** M)) / (1 - t)
        while len(self._tail) <= k:
            prev = self._tail[-1][0] if self._tail else 0.0
            dt = self._tail_gen.standard_exponential() / rate
            idx = lo + _truncated_geometric(self._tail_gen.random(), t, M)
            self._tail.append((prev + dt, idx))
        return self._tail[k]


def _clock_engine(st: TruncState, clocks: ClockStreams, T: float, record: Sequence[float] = (),
                  max_events: int = DEFAULT_MAX_EVENTS):
    """Drive ``st`` in place with the clocks of ``clocks``; returns events and snapshots."""
    heap = []
    hi = clocks.cut if st.last is None else min(clocks.cut, st.last)
    for i in range(st.anchor + 1, hi + 1):
        heap.append((clocks.ring_time(i, 0), i, 0))
    has_tail = st.last is None or st.last > clocks.cut
    if has_tail:
        tm, idx = clocks.tail_event(0, st.last)
        heap.append((tm, idx, -1))
    heapq.heapify(heap)
    events = []
    snaps = []
    rec = sorted(record)
    r = 0
    tail_k = 0
    while heap:
        tm, i, j = heapq.heappop(heap)
        while r < len(rec) and rec[r] < tm:
            snaps.append(st.copy())
            r += 1
        if tm > T:
            break
        if j >= 0:
            if i <= st.anchor:
                continue
            ev = st.ring(i)
            heapq.heappush(heap, (clocks.ring_time(i, j + 1), i, j + 1))
        else:
            tail_k += 1
            nxt = clocks.tail_event(tail_k, st.last)
            heapq.heappush(heap, (nxt[0], nxt[1], -1))
            ev = st.ring(i) if i > st.anchor else None
        if ev is not None:
            events.append((tm, ev[0], ev[1]))
            if len(events) > max_events:
                raise RuntimeError(f"event budget {max_events} exceeded at time {tm:.6g}")
    while r < len(rec):
        snaps.append(st.copy())
        r += 1
    return events, snaps


def simulate_finite(nu: Sequence[int], n: int, t: float, T: float, clocks: ClockStreams) -> Trajectory:
    """Walkers ``1..n`` started at ``nu``, driven by ``clocks`` on ``[0, T]``."""
    nu = [int(x) for x in nu]
    if len(nu) != n:
        raise ValueError("nu must have length n")
    if any(a < b for a, b in zip(nu, nu[1:])):
        raise ValueError("nu must be weakly decreasing")
    if abs(float(t) - clocks.t) > 0:
        raise ValueError("clock rates built for a different t")
    S = list(nu)
    heap = []
    explicit_hi = min(n, clocks.cut)
    for i in range(1, explicit_hi + 1):
        heap.append((clocks.ring_time(i, 0), i, 0))
    if n > clocks.cut:
        tm, idx = clocks.tail_event(0, n)
        heap.append((tm, idx, -1))
    heapq.heapify(heap)
    events = []
    tail_k = 0
    while heap:
        tm, i, j = heapq.heappop(heap)
        if tm > T:
            break
        if j >= 0:
            heapq.heappush(heap, (clocks.ring_time(i, j + 1), i, j + 1))
        else:
            tail_k += 1
            nxt = clocks.tail_event(tail_k, n)
            heapq.heappush(heap, (nxt[0], nxt[1], -1))
        k = i
        while k > 1 and S[k - 2] == S[k - 1]:
            k -= 1
        S[k - 1] += 1
        events.append((tm, k, S[k - 1]))
    return Trajectory(tuple(nu), events, float(T))


def depth_initial(mu: WindowSignature, d: int, depth_n: int) -> TruncState:
    """``F_d`` of ``mu`` restricted to indices ``>= -depth_n``, with ``+inf`` above."""
    lo = -depth_n
    hi = max(mu.hi, lo)
    vals = tuple(mu[i] for i in range(lo, hi))
    return TruncState.from_window(WindowSignature(lo, vals, INF, mu.right), d)


def approx_2inf(mu: WindowSignature, d: int, depth_n: int, t: float, T: float,
                clocks: ClockStreams, times: Sequence[float] | None = None,
                max_events: int = DEFAULT_MAX_EVENTS):
    """Depth-``n`` approximation of the bi-infinite truncated sea at time ``T``.

    Walkers with index ``>= -depth_n`` start from ``mu``; everything above is
    treated as ``+inf``.  Rates are ``t^i`` for absolute index ``i``, which is
    the half-infinite process run for time ``t^{-n-1} T`` and re-indexed by
    ``i -> i - n - 1``.  With ``times`` the states at those times are
    returned as a list; otherwise the state at ``T``.
    """
    if depth_n < 1:
        raise ValueError("depth_n must be >= 1")
    if abs(float(t) - clocks.t) > 0:
        raise ValueError("clock rates built for a different t")
    st = depth_initial(mu, d, depth_n)
    horizon = max(times) if times else T
    events, snaps = _clock_engine(st, clocks, horizon, list(times) if times else (), max_events)
    if times:
        return snaps
    return st


def simulate_edge(mu: Sequence[int], d: int, t: float, T: float, rng, **kw) -> Trajectory:
    """Edge dynamics: ``mu`` occupies indices ``1 - len(mu) .. 0``, ``+inf`` above, ``-inf`` below."""
    mu = tuple(mu)
    ws = WindowSignature(1 - len(mu), mu, INF, NEG_INF)
    return simulate_truncated(TruncState.from_window(ws, d), t, T, rng, **kw)


@dataclass
class StationarityReport:
    tv: float
    cells: list
    p_shifted: list
    p_unshifted: list
    z: list
    samples: int


def shift_stationarity_check(t: float, T: float, d: int, depth_n: int, samples: int, rng,
                             a: int = 0) -> StationarityReport:
    """Compare ``S(T)`` with the shifted ``S(T/t)`` for the flat start ``(a)``.

    One-point laws are compared through the conjugate counts (for ``d = 1``
    this is the index of the lowest walker above ``a``).  The shift moves
    every walker down one index, so the shifted arm runs at depth
    ``depth_n - 1``: after the shift both arms have their top walker at
    index ``-depth_n``.
    """
    if depth_n < 2:
        raise ValueError("depth_n must be >= 2")
    seed = rng.seed if isinstance(rng, RngHandle) else int(rng)
    mu = flat(a)
    plain, shifted = {}, {}
    for s in range(samples):
        c1 = ClockStreams(t, seed, 2 * s, horizon=T)
        st = approx_2inf(mu, d, depth_n, t, T, c1)
        key = tuple(st.counts)
        plain[key] = plain.get(key, 0) + 1
        c2 = ClockStreams(t, seed, 2 * s + 1, horizon=T / t)
        st2 = approx_2inf(mu, d, depth_n - 1, t, T / t, c2)
        key2 = tuple(c - 1 for c in st2.counts)
        shifted[key2] = shifted.get(key2, 0) + 1
    cells = sorted(set(plain) | set(shifted))
    p1 = [plain.get(c, 0) / samples for c in cells]
    p2 = [shifted.get(c, 0) / samples for c in cells]
    tv = 0.5 * sum(abs(x - y) for x, y in zip(p1, p2))
    z = []
    for x, y in zip(p1, p2):
        pool = (x + y) / 2
        var = pool * (1 - pool) * 2 / samples
        z.append(0.0 if var == 0 else (y - x) / math.sqrt(var))
    return StationarityReport(tv, cells, p2, p1, z, samples)

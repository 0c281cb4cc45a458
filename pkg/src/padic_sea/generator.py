"""Generator of the truncated sea on finite down-closed state sets, and its transients.

A state is an ``F_d``-truncated :class:`~padic_sea.signatures.WindowSignature`
whose left fill is pinned at ``d``.  From a state ``eta`` the top walker of
every block of equal values ``v < d`` jumps at rate
``t^i (1 - t^m) / (1 - t)`` (``i`` the block top, ``m`` its length,
``1/(1 - t)`` for the infinite flat tail).  Transitions leaving the chosen
state set are collected in an escape column.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from .signatures import (INF, NEG_INF, WindowSignature, interval_states, is_finite, skew_contains,
                         skew_size, truncate_Fd)


class NotRepresentable(ValueError):
    """A requested state lies outside the generator's state set."""


def _last_finite(ws: WindowSignature):
    if is_finite(ws.right):
        return None
    finite = [i for i in range(ws.lo, ws.hi) if is_finite(ws[i])]
    if finite:
        return max(finite)
    return ws.lo - 1


def _resolve_N(nu: WindowSignature, N):
    derived = _last_finite(nu)
    if N is None or N == math.inf:
        if derived is not None and N == math.inf:
            raise ValueError("N = inf but the signature ends in -inf")
        return derived
    if derived is None:
        raise ValueError("finite N given but the signature has a finite right fill")
    if int(N) != derived:
        raise ValueError(f"N = {N} does not match the last finite index {derived}")
    return int(N)


def blocks(eta: WindowSignature, d: int):
    """Yield ``(top, value, length)`` for every block with finite value below ``d``.

    ``length`` is :data:`INF` for the infinite flat tail.
    """
    i = eta.lo
    hi = eta.hi
    while i < hi:
        v = eta[i]
        j = i
        while j + 1 < hi and eta[j + 1] == v:
            j += 1
        if is_finite(v) and v < d:
            yield i, v, j - i + 1
        i = j + 1
    if is_finite(eta.right) and eta.right < d:
        yield hi, eta.right, INF


def bump(eta: WindowSignature, i: int) -> WindowSignature:
    lo = min(eta.lo, i)
    hi = max(eta.hi, i + 1)
    vals = [eta[k] for k in range(lo, hi)]
    vals[i - lo] = vals[i - lo] + 1
    return WindowSignature(lo, tuple(vals), eta.left, eta.right)


def out_rates(eta: WindowSignature, d: int, t):
    """``[(target, rate)]`` for every jump out of ``eta``."""
    one = Fraction(1) if isinstance(t, Fraction) else 1.0
    out = []
    for top, _, m in blocks(eta, d):
        mult = one / (1 - t) if m is INF else (1 - t ** m) / (1 - t)
        out.append((bump(eta, top), t ** top * mult))
    return out


def pinned_index(eta: WindowSignature, d: int) -> int:
    """Last index whose value is at least ``d``."""
    if eta.left < d:
        raise ValueError("no pinned coordinate")
    k = eta.lo - 1
    for i in range(eta.lo, eta.hi):
        if eta[i] >= d:
            k = i
    return k


def exit_rate(eta: WindowSignature, d: int, t, N) -> object:
    """Closed form ``(t^{eta'_d + 1} - t^{N + 1}) / (1 - t)``."""
    hi = 0 if N is None else t ** (N + 1)
    k = pinned_index(eta, d)
    if N is not None and N <= k:
        return 0 * t
    return (t ** (k + 1) - hi) / (1 - t)


@dataclass
class GeneratorMatrix:
    """Generator restricted to ``states``; ``escape[s]`` is the rate of leaving the set from ``s``."""

    states: list
    Q: np.ndarray
    escape: np.ndarray
    t: object
    d: int
    N: int | None
    exact: bool

    def __post_init__(self):
        self.index = {s: k for k, s in enumerate(self.states)}

    @property
    def anchor(self) -> int:
        return pinned_index(self.states[0], self.d)

    @property
    def rates(self) -> np.ndarray:
        """Full matrix with the escape state appended as the last row and column."""
        S = len(self.states)
        dt = object if self.exact else float
        full = np.zeros((S + 1, S + 1), dtype=dt)
        if self.exact:
            full[:] = Fraction(0)
        full[:S, :S] = self.Q
        full[:S, S] = self.escape
        return full

    def id_of(self, state) -> int:
        if isinstance(state, (int, np.integer)):
            return int(state)
        key = truncate_Fd(state, self.d)
        if key not in self.index:
            raise NotRepresentable(f"state {state!r} is outside the generator's state set")
        return self.index[key]


def _assemble(nu: WindowSignature, states: list, d: int, t, N, exact: bool) -> GeneratorMatrix:
    tt = Fraction(t) if exact else float(t)
    # increasing skew size is a linear extension of containment
    order = sorted(states, key=lambda s: (skew_size(nu, s), s.offset, tuple(map(str, s.window))))
    index = {s: k for k, s in enumerate(order)}
    S = len(order)
    dt = object if exact else float
    Q = np.zeros((S, S), dtype=dt)
    esc = np.zeros(S, dtype=dt)
    if exact:
        Q[:] = Fraction(0)
        esc[:] = Fraction(0)
    for a, eta in enumerate(order):
        total = 0 * tt
        for target, rate in out_rates(eta, d, tt):
            total += rate
            b = index.get(target)
            if b is None:
                esc[a] += rate
            else:
                Q[a, b] += rate
        closed = exit_rate(eta, d, tt, N)
        if exact:
            if total != closed:
                raise AssertionError("exit rate differs from the closed form")
        elif not math.isclose(float(total), float(closed), rel_tol=1e-12, abs_tol=1e-300):
            raise AssertionError("exit rate differs from the closed form")
        Q[a, a] = -total
    return GeneratorMatrix(order, Q, esc, tt, d, N, exact)


def _pinned_start(nu: WindowSignature, d: int) -> WindowSignature:
    nu = truncate_Fd(nu, d)
    if nu.left < d:
        raise ValueError("generator needs a coordinate pinned at d (finite i_0)")
    return nu


def build_Q(nu: WindowSignature, kappa: WindowSignature, d: int, t, N=None,
            exact: bool = False) -> GeneratorMatrix:
    """Generator on the interval ``[nu, kappa]`` of ``F_d``-truncated states.

    ``N`` is the last finite index (``None`` or ``inf`` for an infinite
    tail); it is checked against ``nu``.  With ``exact`` the rates are
    Fractions.
    """
    nu = _pinned_start(nu, d)
    kappa = truncate_Fd(kappa, d)
    N = _resolve_N(nu, N)
    states = interval_states(nu, kappa)
    return _assemble(nu, states, d, t, N, exact)


def ball_states(nu: WindowSignature, d: int, max_skew: int | None = None, limit: int = 200_000) -> list:
    """States reachable from ``nu`` by at most ``max_skew`` jumps (all of them if ``None``)."""
    nu = _pinned_start(nu, d)
    seen = {nu: 0}
    queue = deque([nu])
    while queue:
        eta = queue.popleft()
        k = seen[eta]
        if max_skew is not None and k >= max_skew:
            continue
        for target, _ in out_rates(eta, d, 0.5):
            if target not in seen:
                seen[target] = k + 1
                queue.append(target)
                if len(seen) > limit:
                    raise RuntimeError("state set too large; pass a smaller max_skew")
    return list(seen)


def build_Q_ball(nu: WindowSignature, d: int, t, N=None, max_skew: int | None = None,
                 exact: bool = False) -> GeneratorMatrix:
    """Generator on the states within ``max_skew`` boxes of ``nu``.

    The set is closed downward from ``nu``, so transient probabilities from
    ``nu`` into the set are exact, as on an interval.
    """
    nu = _pinned_start(nu, d)
    N = _resolve_N(nu, N)
    return _assemble(nu, ball_states(nu, d, max_skew), d, t, N, exact)


def uniformized(G: GeneratorMatrix) -> tuple[object, np.ndarray]:
    """``(Lambda, P)`` with ``P = I + Q/Lambda`` on states plus escape."""
    full = G.rates
    S = full.shape[0]
    diag = [abs(full[k, k]) for k in range(S)]
    lam = max(diag)
    if lam == 0:
        lam = Fraction(1) if G.exact else 1.0
    P = full / lam
    for k in range(S):
        P[k, k] += 1
    return lam, P


def transient_row(G: GeneratorMatrix, T: float, frm, eps: float = 1e-12) -> tuple[np.ndarray, int]:
    """Row ``e^{TQ}(frm, .)`` over states plus escape, and the number of series terms used."""
    if eps <= 0 or T < 0:
        raise ValueError("need eps > 0 and T >= 0")
    a = G.id_of(frm)
    lam, P = uniformized(G)
    lam = float(lam)
    P = np.asarray(P, dtype=float)
    v = np.zeros(P.shape[0])
    v[a] = 1.0
    if T == 0:
        return v, 1
    mu = lam * T
    K = int(stats.poisson.ppf(1 - eps / 2, mu)) + 1
    while stats.poisson.sf(K, mu) >= eps:
        K += 1
    w = stats.poisson.pmf(np.arange(K + 1), mu)
    out = w[0] * v
    for k in range(1, K + 1):
        v = v @ P
        out += w[k] * v
    return out, K + 1


def transient_prob(G: GeneratorMatrix, T: float, frm, to, eps: float = 1e-12) -> float:
    """``e^{TQ}(frm, to)`` by uniformization, with absolute error at most ``eps``."""
    row, _ = transient_row(G, T, frm, eps)
    return float(row[G.id_of(to)])


def multi_time_prob(G: GeneratorMatrix, times: Sequence[float], states: Sequence, eps: float = 1e-12,
                    start=None) -> float:
    """Probability of visiting ``states[k]`` at ``times[k]`` for every ``k``.

    The chain starts at ``start`` (default: the first, smallest state of
    ``G``).  Each factor is a transient probability over one gap.
    """
    times = list(times)
    if len(times) != len(states):
        raise ValueError("times and states differ in length")
    if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < 0):
        raise ValueError("times must be increasing and nonnegative")
    cur = G.id_of(start) if start is not None else 0
    ids = [G.id_of(s) for s in states]
    prob = 1.0
    prev = 0.0
    for tm, sid in zip(times, ids):
        if not skew_contains(G.states[cur], G.states[sid]):
            return 0.0
        prob *= transient_prob(G, tm - prev, cur, sid, eps)
        cur, prev = sid, tm
    return prob


def edge_start(mu: Sequence[int], d: int) -> WindowSignature:
    """``F_d`` of the edge configuration: ``mu`` at indices ``1-len(mu)..0``, ``+inf`` above, ``-inf`` below."""
    return truncate_Fd(WindowSignature(1 - len(mu), tuple(mu), INF, NEG_INF), d)

"""Exact q-series helpers and the closed-form probabilities they feed.

Everything here works in :class:`fractions.Fraction` except the infinite
Pochhammer symbol, :func:`lowest_positive_pmf` and the asymptotic branch of
:func:`c_N`, which return binary64.
"""
from __future__ import annotations

import math
from fractions import Fraction

SERIES_TOL = 1e-15
SERIES_CAP = 10_000


class DomainError(ValueError):
    """A formula was evaluated outside the index range where it holds."""


def _frac(t) -> Fraction:
    return Fraction(t)


def _check_t(t: Fraction) -> None:
    if not 0 < t < 1:
        raise DomainError(f"t must lie in (0, 1), got {t}")


def pochhammer(t, n) -> Fraction | float:
    """``(t; t)_n = prod_{i=1}^n (1 - t^i)``.

    ``n`` may be ``math.inf`` (or ``None``), in which case the truncated
    binary64 product of :func:`pochhammer_inf` is returned.
    """
    if n is None or n == math.inf:
        return pochhammer_inf(float(t))[0]
    if n < 0:
        raise DomainError(f"negative Pochhammer index {n}")
    t = _frac(t)
    out = Fraction(1)
    ti = Fraction(1)
    for _ in range(int(n)):
        ti *= t
        out *= 1 - ti
    return out


def pochhammer_inf(t: float, tol: float = SERIES_TOL, cap: int = SERIES_CAP) -> tuple[float, float]:
    """``(t; t)_inf`` as ``(value, bound)``, ``bound`` bounding the relative error.

    The product stops once ``t^M < tol``.  The discarded factors satisfy
    ``|log prod_{i>M} (1 - t^i)| <= t^{M+1} / ((1 - t)(1 - t^{M+1}))``.
    """
    if not 0 < t < 1:
        raise DomainError(f"t must lie in (0, 1), got {t}")
    val = 1.0
    ti = 1.0
    m = 0
    while m < cap:
        ti *= t
        m += 1
        val *= 1.0 - ti
        if ti < tol:
            break
    tail = t ** (m + 1) / ((1 - t) * (1 - t ** (m + 1)))
    return val, math.expm1(tail)


def qbinom(n: int, k: int, t) -> Fraction:
    """Gaussian binomial ``[n choose k]_t``; zero outside ``0 <= k <= n``."""
    if k < 0 or n < 0 or k > n:
        return Fraction(0)
    return pochhammer(t, n) / (pochhammer(t, k) * pochhammer(t, n - k))


def rank_count_rect(n: int, k: int, r: int, q: int) -> int:
    """Number of ``n x k`` matrices over ``F_q`` of rank ``r``."""
    if r < 0 or r > min(n, k):
        return 0
    u = Fraction(1, q)
    val = (Fraction(q) ** (r * n + r * k - r * r) * pochhammer(u, n) * pochhammer(u, k)
           / (pochhammer(u, r) * pochhammer(u, n - r) * pochhammer(u, k - r)))
    if val.denominator != 1:
        raise ArithmeticError("rank count is not an integer")
    return int(val)


def corner_corank_pmf(n: int, d: int, k: int, q: int) -> dict[int, Fraction]:
    """Law of the rank of the lower ``n x k`` block of a uniform full-rank ``(n+d) x k`` matrix.

    Returns ``{rank: probability}`` over the ranks with positive mass.
    """
    if min(n, d, k) < 0 or k > n + d:
        raise DomainError(f"no full-rank {n + d}x{k} matrices")
    u = Fraction(1, q)
    denom = qbinom(n + d, k, u)
    pmf = {}
    for r in range(0, min(n, k) + 1):
        val = u ** ((n - r) * (k - r)) * qbinom(d, k - r, u) * qbinom(n, r, u) / denom
        if val:
            pmf[r] = val
    return pmf


def _poch_ratio(t: Fraction, num: list[int], den: list[int]) -> Fraction:
    """``prod (t;t)_a / prod (t;t)_b``.

    A negative index in the denominator uses the usual convention
    ``1/(t;t)_{-j} = 0`` for ``j >= 1`` and makes the ratio vanish; a negative
    index in the numerator is a domain error.
    """
    for a in num:
        if a < 0:
            raise DomainError(f"negative Pochhammer index {a} in numerator")
    if any(b < 0 for b in den):
        return Fraction(0)
    out = Fraction(1)
    for a in num:
        out *= pochhammer(t, a)
    for b in den:
        out /= pochhammer(t, b)
    return out


def coker_single_box_prob(N: int, n: int, m: int, t) -> Fraction:
    """Closed form attached to the event ``SN(A') = (1, 0, ..., 0)`` for an ``n x m`` corner of Haar ``GL_N``.

    Exhaustive enumeration shows the expression equals the probability that
    ``A' mod p`` has corank exactly 1, i.e. ``SN(A') = (k, 0, ..., 0)`` with
    ``k >= 1``.  For ``k = 1`` exactly use :func:`coker_exact_one_prob`.
    When ``m = N`` (or ``n = 0``) the event is impossible and the formula
    returns 0 through the reciprocal-Pochhammer convention of
    :func:`_poch_ratio`.
    """
    t = _frac(t)
    _check_t(t)
    if not 0 <= n <= m <= N:
        raise DomainError(f"need 0 <= n <= m <= N, got n={n}, m={m}, N={N}")
    num = [N - m, m, n, N - n]
    den = [1, N - m - 1, n - 1, m - n + 1, N]
    return t ** (m - n + 1) * _poch_ratio(t, num, den)


def coker_exact_one_prob(N: int, n: int, m: int, t) -> Fraction:
    """``Pr(SN(A') = (1, 0, ..., 0))`` exactly.

    Given corank 1 mod p, the single positive part is geometric with
    ``Pr(part = 1) = 1 - t^{m-n+1}``.
    """
    t = _frac(t)
    return (1 - t ** (m - n + 1)) * coker_single_box_prob(N, n, m, t)


def expected_kernel(N: int, D, q: int) -> Fraction:
    """``E[q^{corank}]`` for the mod-``q`` reduction of an ``N x N`` corner of ``GL_{N+D}``.

    ``D = None`` or ``math.inf`` gives iid uniform entries.
    """
    u = Fraction(1, q)
    if D is None or D == math.inf:
        return 2 - u ** N
    return (1 - u ** D + 1 - u ** N) / (1 - u ** (N + D))


def c_N(ensemble, r_N: int, mode: str = "exact", indicator: bool = True):
    """Time scaling converting chain steps into sea time.

    ``exact`` returns ``t^{-r_N} / E[1(X <= r_N)(t^{-X} - 1)]`` with ``X`` the
    corank of the ensemble mod p, as a Fraction.  With ``indicator=False`` the
    cutoff is dropped; the two agree asymptotically because the corank tail
    beyond ``r_N`` carries vanishing weight.  ``asymptotic`` returns
    ``t^{-r_N}`` for iid entries and ``t^{-r_N}/(1 - t^D)`` for corners.
    """
    if r_N < 1:
        raise DomainError("r_N must be >= 1")
    t = Fraction(1, ensemble.p)
    if mode == "asymptotic":
        if ensemble.kind == "iid_haar":
            return float(t) ** (-r_N)
        if ensemble.kind == "corner":
            return float(t) ** (-r_N) / (1 - float(t) ** ensemble.D)
        raise DomainError(f"no asymptotic time scaling for kind {ensemble.kind!r}")
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    pmf = ensemble.corank_pmf()
    if pmf.get(0, 0) == 1:
        raise DomainError("degenerate ensemble: corank is 0 almost surely")
    ex = sum((prob * (t ** (-x) - 1) for x, prob in pmf.items() if (x <= r_N or not indicator)),
             Fraction(0))
    if ex == 0:
        raise DomainError("degenerate ensemble: no corank mass at or below r_N")
    return t ** (-r_N) / ex


def stay_prob(r: int, N: int, len_lambda: int, t) -> Fraction:
    """``prod_{j=r}^N (1 - t^{j-len}) / (1 - t^j)``; zero when ``r <= len``."""
    t = _frac(t)
    if not 1 <= r <= N:
        raise DomainError(f"need 1 <= r <= N, got r={r}, N={N}")
    if r <= len_lambda:
        return Fraction(0)
    out = Fraction(1)
    for j in range(r, N + 1):
        out *= (1 - t ** (j - len_lambda)) / (1 - t ** j)
    return out


def _check_bound_range(r, N, len_lambda):
    if not len_lambda + 1 <= r <= N or len_lambda < 0:
        raise DomainError(f"need len+1 <= r <= N, got r={r}, N={N}, len={len_lambda}")


def single_box_bounds(r: int, N: int, m: int, len_lambda: int, t) -> tuple[Fraction, Fraction]:
    """Lower and upper bounds on the probability that exactly coordinate ``r`` grows by one box.

    Returns ``((1 - t^{r-len}) C, C)``.
    """
    t = _frac(t)
    _check_bound_range(r, N, len_lambda)
    if m < 1:
        raise DomainError("multiplicity m must be >= 1")
    l = len_lambda
    C = ((t ** (r - l) - t ** r) * (1 - t ** m) / (1 - t)
         * _poch_ratio(t, [r - 1, N - l], [N, r - l]))
    return (1 - t ** (r - l)) * C, C


def two_jump_bound(r: int, N: int, len_lambda: int, t) -> Fraction:
    """Upper bound on the probability that coordinates ``r..N`` gain two or more boxes.

    The expression is 0 whenever ``len_lambda = 1``.  Monte Carlo shows the
    bound holds when the parts of lambda are 0 or 1 and can fail otherwise:
    with lambda = (2) a single coordinate may grow by two boxes.
    """
    t = _frac(t)
    _check_bound_range(r, N, len_lambda)
    l = len_lambda
    bracket = 1 - t ** (r - l) + t ** (r - l) * (1 - t ** (N - r + 1)) * (1 - t ** l) / (1 - t)
    return 1 - _poch_ratio(t, [r - 1, N - l], [N, r - l]) * bracket


def _lowest_positive_series(n: int, t: float, T: float, cap: int = SERIES_CAP):
    if not 0 < t < 1:
        raise DomainError(f"t must lie in (0, 1), got {t}")
    if T < 0:
        raise DomainError("T must be >= 0")
    poch_inf, _ = pochhammer_inf(t)
    scale = T / (1 - t)
    total = 0.0
    poch_m = 1.0
    m = 0
    bound = math.inf
    while m < cap:
        if m > 0:
            poch_m *= 1.0 - t ** m
        expo = n - m + 1
        # t**expo can overflow for very negative exponents; exp(-huge) is 0 anyway
        log_arg = expo * math.log(t) + math.log(scale) if scale > 0 else -math.inf
        rate = math.exp(log_arg) if log_arg < 700 else math.inf
        term = math.exp(-rate) * t ** (m * (m - 1) / 2) / poch_m
        total += -term if m % 2 else term
        m += 1
        # terms beyond m are at most t^{j(j-1)/2}/(t;t)_inf, summed geometrically
        bound = t ** (m * (m - 1) / 2) / ((1 - t ** m) * poch_inf)
        if bound < SERIES_TOL:
            break
    return total / poch_inf, m, bound / poch_inf


def lowest_positive_pmf(n: int, t: float, T: float, M: int | None = None) -> float:
    """Law of ``X = max{i : S_i(T) > 0}`` for the sea started flat at 0.

    ``M`` caps the number of series terms (default 10^4).  The series is
    stopped once the remainder bound drops below 1e-15.
    """
    val, _, _ = _lowest_positive_series(n, float(t), float(T), cap=M or SERIES_CAP)
    return val


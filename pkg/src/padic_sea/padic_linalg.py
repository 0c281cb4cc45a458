"""Linear algebra over ``Z/p^d``.

Matrices are numpy integer arrays with entries in ``[0, p^d)``.  The batched
kernels (``*_batch``) act on a stack of shape ``(B, rows, cols)``; the
single-matrix API wraps them.  Singular numbers are returned capped at ``d``:
a part equal to ``d`` means "at least d, possibly infinite".
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

MAX_MODULUS = 2 ** 63
# products of two residues must fit in int64 for the vectorized kernels
_INT64_SAFE = 3_037_000_499


def _check_modulus(p: int, d: int) -> int:
    if p < 2 or d < 1:
        raise ValueError(f"need prime p >= 2 and d >= 1, got p={p}, d={d}")
    q = p ** d
    if q >= MAX_MODULUS:
        raise ValueError(f"p^d = {q} does not fit in 63 bits")
    return q


def _dtype(q: int):
    return np.int64 if q <= _INT64_SAFE else object


@dataclass(frozen=True, eq=False)
class MatModPd:
    """A ``rows x cols`` matrix with entries in ``Z/p^d``."""

    p: int
    d: int
    entries: np.ndarray

    def __post_init__(self):
        q = _check_modulus(self.p, self.d)
        arr = np.array(self.entries, dtype=_dtype(q))
        if arr.ndim != 2:
            raise ValueError("entries must be a 2-d array")
        arr = arr % q
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def q(self) -> int:
        return self.p ** self.d

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    def __eq__(self, other):
        return (isinstance(other, MatModPd) and (self.p, self.d) == (other.p, other.d)
                and self.entries.shape == other.entries.shape
                and bool(np.all(self.entries == other.entries)))

    def __matmul__(self, other: "MatModPd") -> "MatModPd":
        return matmul(self, other)

    def to_json(self) -> dict:
        return {"p": self.p, "d": self.d, "rows": self.rows, "cols": self.cols,
                "entries": [[int(x) for x in row] for row in self.entries]}

    @classmethod
    def from_json(cls, obj: dict) -> "MatModPd":
        ent = obj["entries"]
        m = cls(int(obj["p"]), int(obj["d"]), np.array(ent, dtype=object).reshape(len(ent), -1))
        if "rows" in obj and (m.rows, m.cols) != (obj["rows"], obj["cols"]):
            raise ValueError("declared shape does not match entries")
        return m

    @classmethod
    def identity(cls, n: int, p: int, d: int) -> "MatModPd":
        return cls(p, d, np.eye(n, dtype=np.int64))

    @classmethod
    def diag_powers(cls, parts, p: int, d: int) -> "MatModPd":
        """``diag(p^{parts})`` with parts >= d (or infinite) giving 0."""
        return cls(p, d, np.diag(powers_of_p(parts, p, d)))


def powers_of_p(parts, p: int, d: int) -> np.ndarray:
    q = p ** d
    vals = [0 if (not isinstance(x, (int, np.integer)) or x >= d) else p ** int(x) for x in parts]
    return np.array(vals, dtype=_dtype(q)) % q


def matmul(A: MatModPd, B: MatModPd) -> MatModPd:
    if (A.p, A.d) != (B.p, B.d):
        raise ValueError("modulus mismatch")
    if A.cols != B.rows:
        raise ValueError(f"shape mismatch {A.entries.shape} @ {B.entries.shape}")
    return MatModPd(A.p, A.d, matmul_batch(A.entries[None], B.entries[None], A.q)[0])


def matmul_batch(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    """Batched product mod ``q``; falls back to rank-1 accumulation when int64 could overflow."""
    if a.dtype == object or b.dtype == object or q > _INT64_SAFE:
        out = np.einsum("bij,bjk->bik", a.astype(object), b.astype(object)) % q
        return out
    inner = a.shape[-1]
    if (q - 1) ** 2 * inner < 2 ** 63:
        return np.matmul(a, b) % q
    out = np.zeros(a.shape[:-1] + (b.shape[-1],), dtype=np.int64)
    for j in range(inner):
        out = (out + a[..., :, j:j + 1] * b[..., j:j + 1, :]) % q
    return out


def valuations(x: np.ndarray, p: int, d: int) -> np.ndarray:
    """p-adic valuation of residues mod ``p^d``, with 0 mapped to ``d``."""
    v = np.zeros(x.shape, dtype=np.int64)
    pk = 1
    for _ in range(d):
        pk *= p
        v += (x % pk == 0)
    return v


@functools.lru_cache(maxsize=64)
def _inverse_table_mod_p(p: int) -> np.ndarray:
    tab = np.zeros(p, dtype=np.int64)
    for u in range(1, p):
        tab[u] = pow(u, -1, p)
    return tab


def unit_inverse(u: np.ndarray, p: int, d: int) -> np.ndarray:
    """Inverse mod ``p^d`` of residues prime to ``p`` (Newton lifting from mod p)."""
    q = p ** d
    x = _inverse_table_mod_p(p)[(u % p).astype(np.int64)].astype(u.dtype)
    prec = 1
    while prec < d:
        x = (x * (2 - u * x % q)) % q
        prec *= 2
    return x % q


def smith_sn_batch(a: np.ndarray, p: int, d: int) -> np.ndarray:
    """Capped singular numbers of a stack of matrices, weakly decreasing along the last axis.

    Each step picks an entry of minimal valuation in the remaining block
    (first in row-major order), moves it to the pivot position and clears
    the rest of its column with row operations.  Clearing the pivot row is
    unnecessary: the pivot divides every remaining entry, so column
    operations would not change the trailing block.
    """
    q = _check_modulus(p, d)
    dt = _dtype(q)
    a = np.array(a, dtype=dt) % q
    if a.ndim != 3:
        raise ValueError("expected a stack of matrices")
    B, R, C = a.shape
    K = min(R, C)
    parts = np.empty((B, K), dtype=np.int64)
    ar = np.arange(B)
    for s in range(K):
        sub = a[:, s:, s:]
        val = valuations(sub, p, d).reshape(B, -1)
        idx = val.argmin(axis=1)
        vmin = val[ar, idx]
        parts[:, s] = vmin
        if s == K - 1:
            break
        i = idx // (C - s) + s
        j = idx % (C - s) + s
        row_s = a[ar, s, :].copy()
        a[ar, s, :] = a[ar, i, :]
        a[ar, i, :] = row_s
        col_s = a[ar, :, s].copy()
        a[ar, :, s] = a[ar, :, j]
        a[ar, :, j] = col_s
        live = vmin < d
        if dt is object:
            pv = np.array([p ** int(v) if v < d else 1 for v in vmin], dtype=object)
        else:
            pv = np.where(live, p ** np.minimum(vmin, d - 1), 1)
        piv = a[:, s, s]
        unit = np.where(live, piv // pv, 1)
        uinv = unit_inverse(unit, p, d)
        below = a[:, s + 1:, s]
        factor = (below // pv[:, None]) * uinv[:, None] % q
        factor = np.where(live[:, None], factor, 0)
        a[:, s + 1:, s:] = (a[:, s + 1:, s:] - factor[:, :, None] * a[:, s:s + 1, s:]) % q
    return parts[:, ::-1].copy()


def smith_sn(A: MatModPd) -> tuple:
    """``F_d(SN(A))`` as a weakly decreasing tuple of length ``min(rows, cols)``."""
    if A.rows == 0 or A.cols == 0:
        return ()
    return tuple(int(x) for x in smith_sn_batch(A.entries[None], A.p, A.d)[0])


def rank_mod_p_batch(a: np.ndarray, p: int) -> np.ndarray:
    """Rank over ``F_p`` by column-by-column Gaussian elimination."""
    a = np.array(a, dtype=np.int64) % p
    B, R, C = a.shape
    rank = np.zeros(B, dtype=np.int64)
    inv = _inverse_table_mod_p(p)
    rows = np.arange(R)
    for c in range(C):
        # first row at or below the current rank with a nonzero entry in column c
        cand = (a[:, :, c] != 0) & (rows[None, :] >= rank[:, None])
        h = np.nonzero(cand.any(axis=1))[0]
        if h.size == 0:
            continue
        r0 = cand[h].argmax(axis=1)
        rk = rank[h]
        sub = a[h]
        hr = np.arange(h.size)
        tmp = sub[hr, rk].copy()
        sub[hr, rk] = sub[hr, r0]
        sub[hr, r0] = tmp
        pivrow = sub[hr, rk] * inv[sub[hr, rk, c]][:, None] % p
        f = np.where(rows[None, :] > rk[:, None], sub[:, :, c], 0)
        a[h] = (sub - f[:, :, None] * pivrow[:, None, :]) % p
        rank[h] += 1
    return rank


def corank_mod_p(A: MatModPd) -> int:
    """``min(rows, cols)`` minus the rank of ``A mod p``."""
    if A.rows == 0 or A.cols == 0:
        return 0
    r = rank_mod_p_batch(np.asarray(A.entries % A.p, dtype=np.int64)[None], A.p)[0]
    return min(A.rows, A.cols) - int(r)


def corank_mod_p_batch(a: np.ndarray, p: int) -> np.ndarray:
    return min(a.shape[1], a.shape[2]) - rank_mod_p_batch(np.asarray(a % p, dtype=np.int64), p)


def _int_det(m: list[list[int]]) -> int:
    """Exact integer determinant (fraction-free Bareiss elimination)."""
    n = len(m)
    if n == 0:
        return 1
    a = [list(map(int, row)) for row in m]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def _valuation_capped(x: int, p: int, d: int) -> int:
    if x == 0:
        return d
    v = 0
    while x % p == 0 and v < d:
        x //= p
        v += 1
    return v


def det_valuation(A: MatModPd) -> int:
    """p-adic valuation of ``det A``, capped at ``d``."""
    if A.rows != A.cols:
        raise ValueError("det_valuation needs a square matrix")
    det = _int_det(A.entries.tolist()) % A.q
    return _valuation_capped(det, A.p, A.d)


ORACLE_MAX_DIM = 6


def minor_valuation_oracle(A: MatModPd, k: int) -> int:
    """Minimum valuation over all ``k x k`` minors of the integer lift, capped at ``d``."""
    if max(A.rows, A.cols) > ORACLE_MAX_DIM:
        raise ValueError(f"minor oracle limited to dimension <= {ORACLE_MAX_DIM}")
    if not 0 <= k <= min(A.rows, A.cols):
        raise ValueError("k out of range")
    ent = A.entries.tolist()
    best = A.d
    for rows in itertools.combinations(range(A.rows), k):
        for cols in itertools.combinations(range(A.cols), k):
            det = _int_det([[ent[i][j] for j in cols] for i in rows]) % A.q
            best = min(best, _valuation_capped(det, A.p, A.d))
            if best == 0:
                return 0
    return best

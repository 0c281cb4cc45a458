"""GL_N(Z_p)-invariant matrix laws mod p^d and the singular-number chain they drive."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import qcalc
from .padic_linalg import (MatModPd, _check_modulus, _dtype, _inverse_table_mod_p,
                           matmul_batch, powers_of_p, smith_sn_batch)

KINDS = ("iid_haar", "corner", "fixed_sn")


@dataclass(frozen=True)
class RngHandle:
    """A reproducible random stream identified by ``(seed, stream)``.

    The generator is ``PCG64(SeedSequence(seed, spawn_key=(stream,)))``, i.e.
    numpy's hash-based seed derivation; distinct stream ids give independent
    streams.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        if self.seed < 0 or self.stream < 0:
            raise ValueError("seed and stream id must be nonnegative")
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream: int) -> "RngHandle":
        return RngHandle(self.seed, stream)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngHandle):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngHandle(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


@dataclass(frozen=True)
class EnsembleSpec:
    """One of the three matrix laws: ``iid_haar``, ``corner`` (needs ``D``) or ``fixed_sn`` (needs ``sn``)."""

    kind: str
    N: int
    p: int
    d: int
    D: int | None = None
    sn: tuple | None = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        _check_modulus(self.p, self.d)
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.kind == "corner" and (self.D is None or self.D < 1):
            raise ValueError("corner ensemble needs D >= 1")
        if self.kind == "fixed_sn":
            if self.sn is None:
                raise ValueError("fixed_sn ensemble needs sn")
            sn = tuple(min(int(x), self.d) for x in self.sn)
            if len(sn) > self.N or any(x < 0 for x in sn) or list(sn) != sorted(sn, reverse=True):
                raise ValueError(f"invalid singular numbers {self.sn!r}")
            object.__setattr__(self, "sn", sn + (0,) * (self.N - len(sn)))

    @property
    def q(self) -> int:
        return self.p ** self.d

    def corank_pmf(self) -> dict[int, Fraction]:
        """Exact law of the corank of a sample mod p."""
        N, p = self.N, self.p
        if self.kind == "iid_haar":
            total = p ** (N * N)
            return {N - r: Fraction(qcalc.rank_count_rect(N, N, r, p), total)
                    for r in range(N + 1) if qcalc.rank_count_rect(N, N, r, p)}
        if self.kind == "corner":
            return {N - r: pr for r, pr in qcalc.corner_corank_pmf(N, self.D, N, p).items()}
        return {sum(1 for x in self.sn if x >= 1): Fraction(1)}

    def sample_batch(self, rng, size: int) -> np.ndarray:
        gen = as_generator(rng)
        N, p, d = self.N, self.p, self.d
        if self.kind == "iid_haar":
            return additive_haar_batch(gen, size, N, p, d)
        if self.kind == "corner":
            return haar_gl_batch(gen, size, N + self.D, p, d)[:, :N, :N].copy()
        return fixed_sn_batch(gen, size, self.sn, p, d)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "N": self.N, "p": self.p, "d": self.d}
        if self.kind == "corner":
            out["D"] = self.D
        if self.kind == "fixed_sn":
            out["sn"] = list(self.sn)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "EnsembleSpec":
        sn = obj.get("sn")
        return cls(obj["kind"], int(obj["N"]), int(obj["p"]), int(obj["d"]),
                   obj.get("D"), tuple(sn) if sn is not None else None)


def additive_haar_batch(gen: np.random.Generator, size: int, N: int, p: int, d: int,
                        cols: int | None = None) -> np.ndarray:
    q = _check_modulus(p, d)
    shape = (size, N, N if cols is None else cols)
    if _dtype(q) is object:
        return np.array([int(x) for x in gen.integers(0, q, size=shape, dtype=np.uint64).ravel()],
                        dtype=object).reshape(shape)
    return gen.integers(0, q, size=shape, dtype=np.int64)


def haar_gl_batch(gen: np.random.Generator, size: int, N: int, p: int, d: int) -> np.ndarray:
    """Uniform elements of ``GL_N(Z/p^d)``, the image of Haar measure on ``GL_N(Z_p)``.

    Columns are drawn from right to left.  Each column is uniform mod ``p^d``
    and is redrawn until its reduction mod ``p`` leaves the span of the
    columns already drawn.  The span is tracked as an echelon basis mod p.
    """
    q = _check_modulus(p, d)
    inv = _inverse_table_mod_p(p)
    out = np.zeros((size, N, N), dtype=_dtype(q))
    basis = np.zeros((size, N, N), dtype=np.int64)
    pivots = np.zeros((size, N), dtype=np.int64)
    for k, col in enumerate(range(N - 1, -1, -1)):
        pending = np.arange(size)
        while pending.size:
            cand = additive_haar_batch(gen, pending.size, N, p, d, cols=1)[:, :, 0]
            res = np.asarray(cand % p, dtype=np.int64)
            rr = np.arange(pending.size)
            for b in range(k):
                coef = res[rr, pivots[pending, b]]
                res = (res - coef[:, None] * basis[pending, b]) % p
            ok = res.any(axis=1)
            good = pending[ok]
            out[good, :, col] = cand[ok]
            r = res[ok]
            piv = (r != 0).argmax(axis=1)
            lead = r[np.arange(r.shape[0]), piv]
            basis[good, k] = r * inv[lead][:, None] % p
            pivots[good, k] = piv
            pending = pending[~ok]
    return out


def fixed_sn_batch(gen: np.random.Generator, size: int, sn: Sequence[int], p: int, d: int) -> np.ndarray:
    """``U diag(p^sn) V`` with independent uniform ``U, V`` in ``GL_N(Z/p^d)``."""
    q = p ** d
    N = len(sn)
    U = haar_gl_batch(gen, size, N, p, d)
    V = haar_gl_batch(gen, size, N, p, d)
    scale = powers_of_p(sn, p, d)
    return matmul_batch(U * scale[None, None, :] % q, V, q)


def _wrap(arr: np.ndarray, p: int, d: int) -> MatModPd:
    return MatModPd(p, d, arr)


def sample_additive_haar(N: int, p: int, d: int, rng) -> MatModPd:
    """Matrix with iid uniform entries in ``Z/p^d``."""
    return _wrap(additive_haar_batch(as_generator(rng), 1, N, p, d)[0], p, d)


def sample_haar_gl(N: int, p: int, d: int, rng) -> MatModPd:
    """Reduction mod ``p^d`` of a Haar-distributed element of ``GL_N(Z_p)``."""
    return _wrap(haar_gl_batch(as_generator(rng), 1, N, p, d)[0], p, d)


def sample_ensemble(spec: EnsembleSpec, rng) -> MatModPd:
    return _wrap(spec.sample_batch(rng, 1)[0], spec.p, spec.d)


def _scale_columns(m: np.ndarray, states: np.ndarray, p: int, d: int) -> np.ndarray:
    """``m @ diag(p^state)`` row by row of the batch; parts >= d kill the column."""
    q = p ** d
    st = np.asarray(states, dtype=np.int64)
    dt = _dtype(q)
    if dt is object:
        pw = np.array([[p ** int(x) if x < d else 0 for x in row] for row in st], dtype=object)
    else:
        pw = np.where(st < d, p ** np.minimum(st, d - 1), 0)
    return m * pw[:, None, :] % q


def chain_step_batch(states: np.ndarray, spec: EnsembleSpec, rng) -> np.ndarray:
    """One step of the singular-number chain for a stack of states of shape ``(B, N)``."""
    gen = as_generator(rng)
    states = np.asarray(states, dtype=np.int64)
    B = states.shape[0]
    A = spec.sample_batch(gen, B)
    U = haar_gl_batch(gen, B, spec.N, spec.p, spec.d)
    M = _scale_columns(matmul_batch(A, U, spec.q), states, spec.p, spec.d)
    return smith_sn_batch(M, spec.p, spec.d)


def chain_step(nu: Sequence[int], spec: EnsembleSpec, rng) -> tuple:
    """``SN(A U diag(p^nu))`` with ``A`` drawn from ``spec`` and a fresh Haar ``U``."""
    nu = np.asarray([min(int(x), spec.d) for x in nu], dtype=np.int64)
    if nu.size != spec.N:
        raise ValueError("state length must equal N")
    return tuple(int(x) for x in chain_step_batch(nu[None], spec, rng)[0])


def run_chain_batch(init: Sequence[int], spec: EnsembleSpec, steps: int, record_at: Sequence[int],
                    rng, size: int, carry_matrix: bool = False) -> np.ndarray:
    """Run ``size`` independent chains; returns snapshots of shape ``(len(record_at), size, N)``.

    With ``carry_matrix`` the full product ``A_tau ... A_1 B`` is kept, with
    ``B = U diag(p^init) V``, and its singular numbers are recomputed at each
    snapshot instead of using the one-step identity.
    """
    record_at = list(record_at)
    if record_at != sorted(record_at) or (record_at and (record_at[0] < 0 or record_at[-1] > steps)):
        raise ValueError("record_at must be sorted and within [0, steps]")
    gen = as_generator(rng)
    init = np.array([min(int(x), spec.d) for x in init], dtype=np.int64)
    if init.size != spec.N:
        raise ValueError("initial state length must equal N")
    snaps = np.zeros((len(record_at), size, spec.N), dtype=np.int64)
    state = np.repeat(init[None], size, axis=0)
    M = fixed_sn_batch(gen, size, tuple(init), spec.p, spec.d) if carry_matrix else None
    want = {}
    for pos, s in enumerate(record_at):
        want.setdefault(s, []).append(pos)
    for tau in range(steps + 1):
        if tau > 0:
            if carry_matrix:
                M = matmul_batch(spec.sample_batch(gen, size), M, spec.q)
                if tau in want:
                    state = smith_sn_batch(M, spec.p, spec.d)
            else:
                state = chain_step_batch(state, spec, gen)
        for pos in want.get(tau, ()):
            snaps[pos] = state
    return snaps


def run_chain(init: Sequence[int], spec: EnsembleSpec, steps: int, record_at: Sequence[int],
              rng, carry_matrix: bool = False) -> list[tuple]:
    """Snapshots of one chain at the requested step indices."""
    snaps = run_chain_batch(init, spec, steps, record_at, rng, 1, carry_matrix)
    return [tuple(int(x) for x in s[0]) for s in snaps]

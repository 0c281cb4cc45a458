"""Singular numbers of a random matrix product, step by step.

Run with ``python demos/matrix_chain.py``.  Multiplies iid Haar matrices mod
2^3 onto a fixed start and prints how the smallest singular numbers creep up,
then converts step counts to sea time with c_N.
"""
from __future__ import annotations

from padic_sea import qcalc
from padic_sea.ensembles import EnsembleSpec, RngHandle, run_chain
from padic_sea.padic_linalg import MatModPd, smith_sn

A = MatModPd(2, 3, [[2, 4, 0], [0, 6, 2], [4, 0, 1]])
print("example matrix mod 8 has singular numbers", smith_sn(A))

spec = EnsembleSpec("iid_haar", 6, 2, 3)
print("corank law of one factor:", {k: f"{float(v):.4f}" for k, v in spec.corank_pmf().items()})

path = run_chain((0,) * 6, spec, 12, list(range(13)), RngHandle(2024))
for tau, sn in enumerate(path):
    print(f"step {tau:2d}: {sn}")

cN = qcalc.c_N(spec, 3)
print(f"c_N for r_N = 3 is {cN} ~ {float(cN):.3f}, so 12 steps is sea time {12 / float(cN):.3f}")

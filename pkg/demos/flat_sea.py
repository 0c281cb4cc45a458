"""The sea started flat, against the closed-form law of its lowest positive index.

Run with ``python demos/flat_sea.py``.  Uses the depth-n approximation at two
depths driven by the same clocks; the gap between them is the bias proxy.
"""
from __future__ import annotations

from collections import Counter

from padic_sea import qcalc
from padic_sea.harness import tv_distance
from padic_sea.sea_sim import ClockStreams, approx_2inf
from padic_sea.signatures import flat

t, T, n = 0.5, 1.0, 5000
deep, shallow = Counter(), Counter()
for s in range(n):
    clocks = ClockStreams(t, 7, s, horizon=T)
    deep[approx_2inf(flat(0), 1, 10, t, T, clocks).counts[0]] += 1
    shallow[approx_2inf(flat(0), 1, 9, t, T, clocks).counts[0]] += 1

print(" index  depth10  depth9  formula")
for k in range(-4, 5):
    print(f"{k:6d}  {deep[k] / n:7.4f}  {shallow[k] / n:6.4f}  {qcalc.lowest_positive_pmf(k, t, T):7.4f}")
print(f"depth gap (TV): {tv_distance(deep, shallow):.4f}")

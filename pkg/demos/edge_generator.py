"""Exact transient probabilities for the edge process, checked against simulation.

Run with ``python demos/edge_generator.py``.  Builds the generator on every
state reachable from the truncated start and compares e^{TQ} with the
empirical law of simulated trajectories.
"""
from __future__ import annotations

from collections import Counter

from padic_sea.ensembles import RngHandle
from padic_sea.generator import build_Q_ball, edge_start, transient_row
from padic_sea.sea_sim import simulate_edge

mu, d, T, n = (2, 2, 1, 1, 0, 0), 2, 0.75, 20_000
G = build_Q_ball(edge_start(mu, d), d, 0.5)
row, terms = transient_row(G, T, 0)
print(f"{len(G.states)} states, {terms} series terms, escape mass {row[-1]:.1e}")

hits = Counter(G.id_of(simulate_edge(mu, d, 0.5, T, RngHandle(5, s)).final_state().to_window()) for s in range(n))
for k, state in enumerate(G.states):
    window = [state[i] for i in range(-3, 1)]
    print(f"{str(window):16s} exact {row[k]:.4f}  simulated {hits[k] / n:.4f}")

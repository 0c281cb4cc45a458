"""Convergence experiments comparing the matrix chain with the sea, and pmf comparison tools."""
from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from . import __version__, qcalc
from .ensembles import EnsembleSpec, RngHandle, run_chain_batch
from .generator import build_Q_ball, transient_row
from .sea_sim import ClockStreams, DEFAULT_DEPTH, TruncState, approx_2inf
from .signatures import INF, NEG_INF, WindowSignature, part_to_json, truncate_Fd

POOL_BELOW = 10.0


# --------------------------------------------------------------------------- comparison

@dataclass
class ComparisonReport:
    """Empirical-versus-reference comparison of two pmfs over string-keyed cells."""

    empirical: dict
    reference: dict
    tv: float
    chi2: float
    dof: int
    p_value: float
    z: dict
    n_samples: int
    n_reference: int | None = None
    bias: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    config: dict | None = None
    config_hash: str | None = None
    parts: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    wall_clock: float | None = None

    @property
    def max_abs_z(self) -> float:
        return max((abs(v) for v in self.z.values()), default=0.0)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "empirical": dict(sorted(self.empirical.items())),
            "reference": dict(sorted(self.reference.items())),
            "tv": self.tv, "chi2": self.chi2, "dof": self.dof, "p_value": self.p_value,
            "z": dict(sorted(self.z.items())), "max_abs_z": self.max_abs_z,
            "n_samples": self.n_samples, "n_reference": self.n_reference,
            "bias": self.bias, "warnings": list(self.warnings),
            "parts": {k: v.to_dict(include_timing) for k, v in sorted(self.parts.items())},
            "extra": self.extra,
        }
        if self.config is not None:
            out["config"] = self.config
            out["config_hash"] = self.config_hash
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out

    def to_json(self, include_timing: bool = False) -> str:
        """Canonical JSON.  Timing is left out by default so equal configs give equal bytes."""
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=1, default=str)


def _normalize(pmf: Mapping) -> dict:
    total = float(sum(pmf.values()))
    if total <= 0:
        raise ValueError("empty pmf")
    return {str(k): float(v) / total for k, v in pmf.items()}


def compare_pmf(a: Mapping, b: Mapping, n_samples: int, n_reference: int | None = None,
                pool_below: float = POOL_BELOW) -> ComparisonReport:
    """Compare an empirical pmf ``a`` (from ``n_samples`` draws) with a reference ``b``.

    ``a`` and ``b`` may hold counts or probabilities.  Reports total
    variation over all cells and, after pooling cells whose expected count
    is below ``pool_below``, the chi-square statistic and per-cell
    ``z = (p_hat - p) / sqrt(p (1 - p) / n)``.  If the reference is itself
    empirical, pass ``n_reference`` to use the two-sample variance.
    """
    if not a or not b:
        raise ValueError("empty support")
    pa, pb = _normalize(a), _normalize(b)
    cells = sorted(set(pa) | set(pb))
    tv = 0.5 * sum(abs(pa.get(c, 0.0) - pb.get(c, 0.0)) for c in cells)
    if n_reference:
        # two-sample test: cells are judged under the pooled estimate
        w = n_samples / (n_samples + n_reference)
        base = {c: w * pa.get(c, 0.0) + (1 - w) * pb.get(c, 0.0) for c in cells}
        scale = 1.0 / n_samples + 1.0 / n_reference
    else:
        base = {c: pb.get(c, 0.0) for c in cells}
        scale = 1.0 / n_samples
    big = [c for c in cells if base[c] * n_samples >= pool_below]
    small = [c for c in cells if c not in big]
    groups = {c: [c] for c in big}
    if small:
        groups["<pooled>"] = small
    z, chi2 = {}, 0.0
    for name, members in groups.items():
        ph = sum(pa.get(c, 0.0) for c in members)
        p = sum(pb.get(c, 0.0) for c in members)
        p0 = sum(base[c] for c in members)
        var = p0 * (1 - p0) * scale
        if var > 0:
            z[name] = (ph - p) / math.sqrt(var)
        else:
            z[name] = 0.0 if ph == p else math.inf
        if p0 > 0:
            chi2 += (ph - p) ** 2 / (p0 * scale)
        elif ph != p:
            chi2 = math.inf
    dof = max(len(groups) - 1, 0)
    p_value = float(stats.chi2.sf(chi2, dof)) if dof > 0 else 1.0
    return ComparisonReport(pa, pb, tv, chi2, dof, p_value, z, n_samples, n_reference)


def tv_distance(a: Mapping, b: Mapping) -> float:
    pa, pb = _normalize(a), _normalize(b)
    return 0.5 * sum(abs(pa.get(c, 0.0) - pb.get(c, 0.0)) for c in set(pa) | set(pb))


# --------------------------------------------------------------------------- configs

@dataclass
class ExperimentConfig:
    """Everything that determines a convergence experiment (and its report)."""

    experiment: str
    ensemble: EnsembleSpec
    N: int
    r_N: int
    p: int
    d: int
    times: tuple
    samples: int
    seed: int
    t: str | None = None
    init: tuple | None = None
    depth: int = DEFAULT_DEPTH
    window: int = 5
    ref_samples: int | None = None
    max_skew: int = 12
    chunk: int = 2000
    workers: int = 1
    cN_mode: str = "exact"
    output: str | None = None

    def __post_init__(self):
        if isinstance(self.ensemble, dict):
            self.ensemble = EnsembleSpec.from_json(self.ensemble)
        self.times = tuple(float(x) for x in self.times)
        if self.init is not None:
            self.init = tuple(int(x) for x in self.init)
        if self.t is None:
            self.t = str(Fraction(1, self.p))
        if self.experiment not in ("bulk", "edge"):
            raise ValueError("experiment must be 'bulk' or 'edge'")
        if not 1 <= self.r_N <= self.N:
            raise ValueError("need 1 <= r_N <= N")
        if list(self.times) != sorted(self.times) or any(x < 0 for x in self.times) or not self.times:
            raise ValueError("times must be nonempty, nonnegative and increasing")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if (self.ensemble.N, self.ensemble.p, self.ensemble.d) != (self.N, self.p, self.d):
            raise ValueError("ensemble N, p, d must match the experiment")
        if self.init is not None and len(self.init) != self.N:
            raise ValueError("init must have length N")

    @property
    def t_value(self) -> Fraction:
        return Fraction(self.t)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ensemble"] = self.ensemble.to_json()
        d["times"] = list(self.times)
        d["init"] = list(self.init) if self.init is not None else None
        d.pop("output", None)
        d.pop("workers", None)
        return d

    def content_hash(self) -> str:
        blob = json.dumps({"config": self.to_dict(), "version": __version__}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        return cls(**obj)


# --------------------------------------------------------------------------- windows

def _cell(values: Sequence) -> str:
    return ",".join(str(part_to_json(v)) for v in values)


def matrix_windows(states: np.ndarray, r_N: int, N: int, d: int, half: int) -> list:
    """Window cells of ``s^{r_N}(iota(sn))`` at relative indices ``-half..half``."""
    out = []
    for row in states:
        vals = []
        for i in range(-half, half + 1):
            k = i + r_N
            if k <= 0:
                vals.append(d)
            elif k > N:
                vals.append(NEG_INF)
            else:
                vals.append(min(int(row[k - 1]), d))
        _check_window(vals, d)
        out.append(_cell(vals))
    return out


def _check_window(vals, d):
    for a, b in zip(vals, vals[1:]):
        if a < b:
            raise AssertionError(f"window not weakly decreasing: {vals}")
    if any(v > d for v in vals):
        raise AssertionError(f"window exceeds the cap: {vals}")


def sea_window(state, half: int, d: int | None = None) -> str:
    """Window cell of a sea state (TruncState or WindowSignature) at indices ``-half..half``."""
    vals = [state.value(i) if isinstance(state, TruncState) else state[i] for i in range(-half, half + 1)]
    cap = state.d if isinstance(state, TruncState) else d
    if cap is not None:
        _check_window(vals, cap)
    return _cell(vals)


def bulk_reference_start(init: Sequence[int], r_N: int, N: int, d: int) -> WindowSignature:
    """Sea initial condition for a bulk run: the shifted singular numbers, continued flat on both sides."""
    sn = [min(int(x), d) for x in init]
    return WindowSignature(1 - r_N, tuple(sn), sn[0], sn[-1])


def edge_reference_start(init: Sequence[int], N: int, d: int) -> WindowSignature:
    return truncate_Fd(WindowSignature(1 - N, tuple(init), INF, NEG_INF), d)


# --------------------------------------------------------------------------- chain side

def _chain_chunk(args):
    spec_json, init, steps, record, size, seed, chunk_id = args
    spec = EnsembleSpec.from_json(spec_json)
    return run_chain_batch(init, spec, steps, record, RngHandle(seed, chunk_id), size)


def _chain_snapshots(cfg: ExperimentConfig, steps: list) -> np.ndarray:
    init = cfg.init if cfg.init is not None else (0,) * cfg.N
    record = sorted(set(steps))
    jobs = []
    left, k = cfg.samples, 0
    while left > 0:
        size = min(cfg.chunk, left)
        jobs.append((cfg.ensemble.to_json(), init, max(record), record, size, cfg.seed, k))
        left -= size
        k += 1
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(_chain_chunk, jobs))
    else:
        parts = [_chain_chunk(j) for j in jobs]
    snaps = np.concatenate(parts, axis=1)
    pos = {s: i for i, s in enumerate(record)}
    return np.stack([snaps[pos[s]] for s in steps])


def _histogram(cells: Sequence[str]) -> dict:
    out: dict = {}
    for c in cells:
        out[c] = out.get(c, 0) + 1
    return out


# --------------------------------------------------------------------------- sea side

_REF_STREAM = 2 ** 40


def _sea_mc(mu: WindowSignature, cfg: ExperimentConfig, depth: int, half: int):
    """Depth-approximation samples of the window cells at every time, for depths ``depth`` and ``depth-1``."""
    t = float(cfg.t_value)
    n = cfg.ref_samples or cfg.samples
    horizon = max(cfg.times) if max(cfg.times) > 0 else 1.0
    deep, shallow = [], []
    for s in range(n):
        clocks = ClockStreams(t, cfg.seed, _REF_STREAM + s, horizon=horizon)
        a = approx_2inf(mu, cfg.d, depth, t, horizon, clocks, times=list(cfg.times))
        b = approx_2inf(mu, cfg.d, depth - 1, t, horizon, clocks, times=list(cfg.times))
        deep.append([sea_window(x, half) for x in a])
        shallow.append([sea_window(x, half) for x in b])
    return deep, shallow, n


def _generator_reference(mu: WindowSignature, cfg: ExperimentConfig, half: int, N=None):
    """Exact window pmfs (per time and joint) from the generator on a down-closed ball."""
    t = float(cfg.t_value)
    G = build_Q_ball(mu, cfg.d, t, N=N, max_skew=cfg.max_skew)
    S = len(G.states)
    cells = [sea_window(s, half, cfg.d) for s in G.states]
    # path distribution: (joint cell prefix, current state) -> probability
    paths = {((), 0): 1.0}
    prev = 0.0
    per_time = []
    row_cache: dict = {}
    for tm in cfg.times:
        gap = tm - prev
        nxt: dict = {}
        for (prefix, st), pr in paths.items():
            key = (st, gap)
            if key not in row_cache:
                row_cache[key] = transient_row(G, gap, st, eps=1e-12)[0]
            row = row_cache[key]
            for s2 in range(S):
                if row[s2] > 0:
                    k2 = (prefix + (cells[s2],), s2)
                    nxt[k2] = nxt.get(k2, 0.0) + pr * row[s2]
        paths = nxt
        prev = tm
        single: dict = {}
        for (prefix, _), pr in paths.items():
            single[prefix[-1]] = single.get(prefix[-1], 0.0) + pr
        per_time.append(single)
    joint: dict = {}
    for (prefix, _), pr in paths.items():
        joint["|".join(prefix)] = joint.get("|".join(prefix), 0.0) + pr
    escape = 1.0 - sum(joint.values())
    return per_time, joint, escape, S


def _corank_warnings(cfg: ExperimentConfig) -> list:
    warns = []
    try:
        pmf = cfg.ensemble.corank_pmf()
    except Exception:  # pragma: no cover - defensive
        return warns
    tail = float(sum(pr for x, pr in pmf.items() if x >= cfg.r_N))
    if cfg.experiment == "bulk" and tail > 1e-3:
        warns.append(f"corank mass at or above r_N is {tail:.3g}; bulk hypotheses look violated")
    if pmf.get(0, 0) == 1:
        warns.append("corank is 0 almost surely; the chain does not move")
    half = cfg.window // 2
    if cfg.experiment == "bulk" and (cfg.r_N - half < 1 or cfg.r_N + half > cfg.N):
        warns.append("observation window reaches past the matrix boundary")
    return warns


def _run(cfg: ExperimentConfig) -> ComparisonReport:
    start = time.perf_counter()
    half = cfg.window // 2
    t = cfg.t_value
    if Fraction(1, cfg.p) != t:
        raise ValueError("the chain comparison needs t = 1/p")
    r_N = cfg.r_N if cfg.experiment == "bulk" else cfg.N
    cN = qcalc.c_N(cfg.ensemble, r_N, cfg.cN_mode)
    cN_frac = Fraction(cN) if cfg.cN_mode == "exact" else None
    steps = [math.floor(cN_frac * Fraction(T).limit_denominator(10 ** 12)) if cN_frac is not None
             else math.floor(cN * T) for T in cfg.times]
    snaps = _chain_snapshots(cfg, steps)
    emp_cells = [matrix_windows(s, r_N, cfg.N, cfg.d, half) for s in snaps]
    init = cfg.init if cfg.init is not None else (0,) * cfg.N
    warnings = _corank_warnings(cfg)
    bias: dict = {}

    if cfg.experiment == "edge":
        mu = edge_reference_start(init, cfg.N, cfg.d)
        # the edge sits at index 0 after shifting by N
        per_time, joint_ref, escape, S = _generator_reference(mu, cfg, half, N=0)
        bias.update(reference="generator", escape_mass=escape, states=S)
        n_ref = None
    else:
        mu = bulk_reference_start(init, r_N, cfg.N, cfg.d)
        if mu.left >= cfg.d:
            per_time, joint_ref, escape, S = _generator_reference(mu, cfg, half)
            bias.update(reference="generator", escape_mass=escape, states=S)
            n_ref = None
        else:
            deep, shallow, n_ref = _sea_mc(mu, cfg, cfg.depth, half)
            per_time = [_histogram([row[k] for row in deep]) for k in range(len(cfg.times))]
            joint_ref = _histogram(["|".join(row) for row in deep])
            shallow_joint = _histogram(["|".join(row) for row in shallow])
            differ = sum(1 for a, b in zip(deep, shallow) if a != b) / n_ref
            bias.update(reference="depth-approximation", depth=cfg.depth,
                        depth_gap_tv=tv_distance(joint_ref, shallow_joint),
                        depth_gap_fraction=differ)

    parts = {}
    for k, T in enumerate(cfg.times):
        rep = compare_pmf(_histogram(emp_cells[k]), per_time[k], cfg.samples, n_ref)
        rep.extra = {"T": T, "steps": steps[k]}
        parts[f"T={T!r}"] = rep
    joint_emp = _histogram(["|".join(c[i] for c in emp_cells) for i in range(cfg.samples)])
    top = compare_pmf(joint_emp, joint_ref, cfg.samples, n_ref)
    top.parts = parts
    top.bias = bias
    top.warnings = warnings
    top.config = cfg.to_dict()
    top.config_hash = cfg.content_hash()
    top.extra = {"c_N": str(cN), "c_N_float": float(cN), "steps": steps, "r_N": r_N,
                 "window": [-half, half]}
    top.wall_clock = time.perf_counter() - start
    return top


def run_bulk_convergence(cfg: ExperimentConfig) -> ComparisonReport:
    """Matrix chain at ``floor(c_N T)`` steps versus the sea, seen through a window around ``r_N``.

    The top-level fields compare joint laws over all times; ``parts`` holds
    the one-time comparisons.
    """
    if cfg.experiment != "bulk":
        raise ValueError("config is not a bulk experiment")
    return _run(cfg)


def run_edge_convergence(cfg: ExperimentConfig) -> ComparisonReport:
    """As :func:`run_bulk_convergence` with the observation point at ``N`` and the edge sea as reference."""
    if cfg.experiment != "edge":
        raise ValueError("config is not an edge experiment")
    return _run(cfg)

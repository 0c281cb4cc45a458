"""Command-line entry point: ``padic-sea <command> ...``.

Exit codes: 0 on completion, 2 when an experiment reports hypothesis
warnings, 1 on any error (including bad arguments).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction

import numpy as np

from . import qcalc
from .ensembles import EnsembleSpec, RngHandle, run_chain_batch
from .generator import build_Q, edge_start, multi_time_prob, transient_row
from .harness import ExperimentConfig, compare_pmf, run_bulk_convergence, run_edge_convergence, sea_window
from .padic_linalg import MatModPd, corank_mod_p, det_valuation, smith_sn
from .sea_sim import (DEFAULT_DEPTH, ClockStreams, TruncState, approx_2inf, simulate_edge, simulate_finite,
                      simulate_truncated)
from .signatures import WindowSignature

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2

FORMULAS = {
    "pochhammer": qcalc.pochhammer,
    "qbinom": qcalc.qbinom,
    "rank_count_rect": qcalc.rank_count_rect,
    "corner_corank_pmf": qcalc.corner_corank_pmf,
    "coker_single_box_prob": qcalc.coker_single_box_prob,
    "coker_exact_one_prob": qcalc.coker_exact_one_prob,
    "expected_kernel": qcalc.expected_kernel,
    "stay_prob": qcalc.stay_prob,
    "single_box_bounds": qcalc.single_box_bounds,
    "two_jump_bound": qcalc.two_jump_bound,
    "lowest_positive_pmf": qcalc.lowest_positive_pmf,
}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _json_arg(text: str):
    """Inline JSON, or ``@path`` to read it from a file."""
    if text.startswith("@"):
        with open(text[1:]) as fh:
            return json.load(fh)
    return json.loads(text)


def _jsonable(x):
    if isinstance(x, Fraction):
        return {"exact": str(x), "float": float(x)}
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _histogram_csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _ensemble(args) -> EnsembleSpec:
    if args.ensemble:
        return EnsembleSpec.from_json(_json_arg(args.ensemble))
    if args.kind is None or args.N is None:
        raise CliError("give --ensemble JSON or --kind and --N")
    sn = tuple(json.loads(args.sn)) if args.sn else None
    return EnsembleSpec(args.kind, args.N, args.p, args.d, args.D, sn)


def _add_ensemble_flags(sp):
    sp.add_argument("--ensemble", help="ensemble spec as JSON (or @file)")
    sp.add_argument("--kind", choices=("iid_haar", "corner", "fixed_sn"))
    sp.add_argument("--N", type=int)
    sp.add_argument("--p", type=int, default=2)
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--D", type=int)
    sp.add_argument("--sn", help="singular numbers for fixed_sn, JSON list")


# --------------------------------------------------------------------------- commands

def cmd_snf(args) -> int:
    obj = _json_arg(args.matrix)
    if isinstance(obj, dict):
        A = MatModPd.from_json(obj)
    else:
        if args.p is None or args.d is None:
            raise CliError("a bare matrix needs --p and --d")
        A = MatModPd(args.p, args.d, np.array(obj, dtype=object).reshape(len(obj), -1))
    res = {"sn": list(smith_sn(A)), "corank_mod_p": corank_mod_p(A)}
    if A.rows == A.cols:
        res["det_valuation"] = det_valuation(A)
    _emit(json.dumps(res), args.out)
    return EXIT_OK


def cmd_formulas(args) -> int:
    fn = FORMULAS[args.name]
    kwargs = _json_arg(args.params) if args.params else {}
    for key in ("t",):
        if isinstance(kwargs.get(key), str):
            kwargs[key] = Fraction(kwargs[key])
    _emit(json.dumps({"name": args.name, "params": _json_arg(args.params) if args.params else {},
                      "value": _jsonable(fn(**kwargs))}), args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    spec = _ensemble(args)
    mats = spec.sample_batch(RngHandle(args.seed), args.count)
    sns = [tuple(int(x) for x in smith_sn(MatModPd(spec.p, spec.d, m))) for m in mats]
    if args.histogram:
        hist: dict = {}
        for s in sns:
            hist[s] = hist.get(s, 0) + 1
        rows = [(" ".join(map(str, k)), v) for k, v in sorted(hist.items(), reverse=True)]
        _emit(_histogram_csv(rows, ("sn", "count")), args.out)
    else:
        lines = [json.dumps({"entries": [[int(x) for x in row] for row in m], "sn": list(s)})
                 for m, s in zip(mats, sns)]
        _emit("\n".join(lines), args.out)
    return EXIT_OK


def _window_arg(text: str) -> WindowSignature:
    obj = _json_arg(text)
    if isinstance(obj, dict):
        return WindowSignature.from_json(obj)
    raise CliError("expected a window signature JSON object with offset/window/left/right")


def cmd_sea(args) -> int:
    t = float(Fraction(args.t))
    hist: dict = {}
    single = args.samples == 1 and args.mode != "approx2inf"
    for s in range(args.samples):
        if args.mode == "finite":
            nu = json.loads(args.init)
            traj = simulate_finite(nu, len(nu), t, args.T, ClockStreams(t, args.seed, s, horizon=args.T))
            final = traj.final_state()
            key = " ".join(map(str, final))
        elif args.mode == "trunc":
            st = TruncState.from_window(_window_arg(args.init), args.d)
            traj = simulate_truncated(st, t, args.T, RngHandle(args.seed, s))
            key = sea_window(traj.final_state(), args.half)
        elif args.mode == "edge":
            traj = simulate_edge(json.loads(args.init), args.d, t, args.T, RngHandle(args.seed, s))
            key = sea_window(traj.final_state(), args.half)
        else:
            mu = _window_arg(args.init)
            clocks = ClockStreams(t, args.seed, s, horizon=args.T)
            st = approx_2inf(mu, args.d, args.depth, t, args.T, clocks)
            key = sea_window(st, args.half)
        if single:
            _emit(traj.to_csv(), args.out)
            return EXIT_OK
        hist[key] = hist.get(key, 0) + 1
    rows = sorted(hist.items())
    _emit(_histogram_csv(rows, ("state", "count")), args.out)
    return EXIT_OK


def cmd_chain(args) -> int:
    spec = _ensemble(args)
    init = json.loads(args.init) if args.init else [0] * spec.N
    record = sorted(int(x) for x in args.record.split(",")) if args.record else [args.steps]
    snaps = run_chain_batch(init, spec, args.steps, record, RngHandle(args.seed), args.samples)
    rows = []
    for step, snap in zip(record, snaps):
        hist: dict = {}
        for row in snap:
            key = " ".join(str(int(x)) for x in row)
            hist[key] = hist.get(key, 0) + 1
        rows.extend((step, k, v) for k, v in sorted(hist.items()))
    _emit(_histogram_csv(rows, ("step", "sn", "count")), args.out)
    return EXIT_OK


def _state_arg(text: str, d: int) -> WindowSignature:
    obj = _json_arg(text)
    if isinstance(obj, list):
        return edge_start(obj, d)
    return WindowSignature.from_json(obj)


def cmd_gen_prob(args) -> int:
    t = Fraction(args.t)
    frm = _state_arg(args.frm, args.d)
    targets = [_state_arg(x, args.d) for x in args.to]
    times = [float(x) for x in args.T.split(",")]
    if len(times) != len(targets):
        raise CliError("need one --to state per time")
    G = build_Q(frm, targets[-1], args.d, float(t), N=args.N_last)
    if len(times) == 1:
        row, terms = transient_row(G, times[0], frm, args.eps)
        prob = float(row[G.id_of(targets[0])])
    else:
        prob = multi_time_prob(G, times, targets, args.eps, start=frm)
        terms = None
    _emit(json.dumps({"probability": prob, "terms": terms, "states": len(G.states), "eps": args.eps,
                      "times": times}), args.out)
    return EXIT_OK


def _experiment_config(args, kind: str) -> ExperimentConfig:
    if args.config:
        obj = _json_arg("@" + args.config)
        obj.setdefault("experiment", kind)
        if args.seed is not None:
            obj["seed"] = args.seed
        if "seed" not in obj:
            raise CliError("--seed is required (or a seed in the config file)")
        if args.workers is not None:
            obj["workers"] = args.workers
        return ExperimentConfig.from_dict(obj)
    if args.seed is None:
        raise CliError("--seed is required")
    spec = _ensemble(args)
    r_N = spec.N if kind == "edge" else args.r_N
    if r_N is None:
        raise CliError("--r-N is required for bulk runs")
    return ExperimentConfig(kind, spec, spec.N, r_N, spec.p, spec.d,
                            tuple(float(x) for x in args.times.split(",")), args.samples, args.seed,
                            init=tuple(json.loads(args.init)) if args.init else None,
                            depth=args.depth, window=args.window, ref_samples=args.ref_samples,
                            workers=args.workers or 1)


def _run_experiment(args, kind: str) -> int:
    cfg = _experiment_config(args, kind)
    rep = run_bulk_convergence(cfg) if kind == "bulk" else run_edge_convergence(cfg)
    _emit(rep.to_json(include_timing=args.timing), args.out or cfg.output)
    summary = f"tv={rep.tv:.6g} max|z|={rep.max_abs_z:.3g} " + " ".join(
        f"{k}:tv={v.tv:.6g}" for k, v in sorted(rep.parts.items()))
    print(summary, file=sys.stderr)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_WARN if rep.warnings else EXIT_OK


def _read_pmf(path: str) -> dict:
    with open(path) as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
        return {str(k): float(v) for k, v in obj.items()}
    except json.JSONDecodeError:
        rows = list(csv.reader(io.StringIO(text)))
        return {r[-2]: float(r[-1]) for r in rows[1:] if r}


def cmd_compare(args) -> int:
    rep = compare_pmf(_read_pmf(args.a), _read_pmf(args.b), args.n, args.n_ref)
    _emit(rep.to_json(), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="padic-sea", description="p-adic matrix products and the Poisson sea.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("snf", help="singular numbers, det valuation and corank of one matrix")
    sp.add_argument("--matrix", required=True, help="JSON list of rows or MatModPd JSON (or @file)")
    sp.add_argument("--p", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_snf)

    sp = sub.add_parser("formulas", help="evaluate a closed-form q-formula")
    sp.add_argument("--name", required=True, choices=sorted(FORMULAS))
    sp.add_argument("--params", help='keyword arguments as JSON, e.g. {"n": 3, "k": 2, "t": "1/2"}')
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_formulas)

    sp = sub.add_parser("sample", help="draw matrices from an ensemble")
    _add_ensemble_flags(sp)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--histogram", action="store_true", help="CSV histogram of singular numbers")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("sea", help="simulate the sea")
    sp.add_argument("--mode", choices=("finite", "trunc", "approx2inf", "edge"), required=True)
    sp.add_argument("--init", required=True,
                    help="JSON list (finite, edge) or window signature object (trunc, approx2inf)")
    sp.add_argument("--t", default="1/2")
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--depth", type=int, default=DEFAULT_DEPTH)
    sp.add_argument("--samples", type=int, default=1)
    sp.add_argument("--half", type=int, default=2, help="half-width of the histogram window")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sea)

    sp = sub.add_parser("chain", help="run the singular-number chain")
    _add_ensemble_flags(sp)
    sp.add_argument("--init", help="initial singular numbers, JSON list (default zeros)")
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--record", help="comma-separated steps to record (default: last)")
    sp.add_argument("--samples", type=int, default=1)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_chain)

    sp = sub.add_parser("gen-prob", help="exact transient probabilities from the generator")
    sp.add_argument("--from", dest="frm", required=True, help="window JSON, or edge list")
    sp.add_argument("--to", action="append", required=True, help="target state (repeat for several times)")
    sp.add_argument("--T", required=True, help="comma-separated times")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--t", default="1/2")
    sp.add_argument("--N", dest="N_last", type=int, help="last finite index")
    sp.add_argument("--eps", type=float, default=1e-12)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen_prob)

    for name, kind in (("bulk-converge", "bulk"), ("edge-converge", "edge")):
        sp = sub.add_parser(name, help=f"{kind} convergence experiment")
        sp.add_argument("--config", help="ExperimentConfig JSON file")
        _add_ensemble_flags(sp)
        sp.add_argument("--r-N", dest="r_N", type=int)
        sp.add_argument("--times", default="1.0")
        sp.add_argument("--samples", type=int, default=10_000)
        sp.add_argument("--ref-samples", type=int)
        sp.add_argument("--init", help="singular numbers of the starting matrix, JSON list")
        sp.add_argument("--depth", type=int, default=DEFAULT_DEPTH)
        sp.add_argument("--window", type=int, default=5)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--timing", action="store_true", help="include wall-clock in the report")
        sp.add_argument("--out")
        sp.set_defaults(func=lambda a, k=kind: _run_experiment(a, k))

    sp = sub.add_parser("compare", help="compare two pmfs (JSON dict or histogram CSV)")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--n", type=int, required=True, help="sample count behind --a")
    sp.add_argument("--n-ref", type=int, help="sample count behind --b if it is empirical")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

import json
import math

import numpy as np
import pytest

from padic_sea import qcalc
from padic_sea.ensembles import EnsembleSpec, RngHandle, run_chain_batch
from padic_sea.harness import (ExperimentConfig, _check_window, compare_pmf, matrix_windows, run_bulk_convergence,
                               run_edge_convergence, tv_distance)


def test_compare_identical_and_disjoint():
    a = {"x": 0.25, "y": 0.75}
    rep = compare_pmf(a, a, 100)
    assert rep.tv == 0 and rep.max_abs_z == 0
    rep = compare_pmf({"x": 1}, {"y": 1}, 100)
    assert rep.tv == 1
    with pytest.raises(ValueError):
        compare_pmf({}, a, 10)


def test_compare_binomial_calibration():
    from scipy import stats
    n = 10_000
    draws = RngHandle(1).generator().binomial(10, 0.3, n)
    emp = {str(k): int((draws == k).sum()) for k in range(11)}
    ref = {str(k): stats.binom.pmf(k, 10, 0.3) for k in range(11)}
    rep = compare_pmf(emp, ref, n)
    assert rep.max_abs_z < 4 and rep.p_value > 1e-3
    assert "<pooled>" in rep.z  # tail cells with expected count < 10
    assert abs(sum(rep.empirical.values()) - 1) < 1e-9 and abs(sum(rep.reference.values()) - 1) < 1e-9


def test_compare_two_sample_handles_unseen_cells():
    rep = compare_pmf({"a": 90, "b": 10}, {"a": 100}, 100, n_reference=100)
    assert math.isfinite(rep.max_abs_z) and math.isfinite(rep.chi2)


def test_tv_distance():
    assert tv_distance({"a": 1, "b": 1}, {"a": 3, "b": 1}) == pytest.approx(0.25)


def test_config_validation():
    spec = EnsembleSpec("iid_haar", 4, 2, 1)
    ok = dict(experiment="bulk", ensemble=spec, N=4, r_N=2, p=2, d=1, times=(0.5, 1.0), samples=10, seed=1)
    ExperimentConfig(**ok)
    for bad in (dict(r_N=5), dict(times=(1.0, 0.5)), dict(samples=0), dict(experiment="other"), dict(N=5),
                dict(init=(0, 0))):
        with pytest.raises(ValueError):
            ExperimentConfig(**{**ok, **bad})
    cfg = ExperimentConfig(**ok)
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))).content_hash() == cfg.content_hash()


def small_bulk(**kw):
    spec = EnsembleSpec("iid_haar", 6, 2, 1)
    base = dict(experiment="bulk", ensemble=spec, N=6, r_N=3, p=2, d=1, times=(0.5, 1.0), samples=300, seed=5,
                chunk=100, depth=6)
    base.update(kw)
    return ExperimentConfig(**base)


def test_bulk_time_zero_point_mass():
    rep = run_bulk_convergence(small_bulk(times=(0.0,), samples=50))
    assert rep.empirical == {"0,0,0,0,0": 1.0}
    assert rep.tv == 0.0


def test_bulk_report_deterministic_across_workers():
    a = run_bulk_convergence(small_bulk(workers=1)).to_json()
    b = run_bulk_convergence(small_bulk(workers=2)).to_json()
    assert a == b
    body = json.loads(a)
    assert body["config"]["seed"] == 5 and len(body["config_hash"]) == 64
    assert "wall_clock" not in body
    assert body["bias"]["reference"] == "depth-approximation"
    assert set(body["parts"]) == {"T=0.5", "T=1.0"}


def test_bulk_pinned_start_uses_generator():
    rep = run_bulk_convergence(small_bulk(init=(1, 1, 1, 1, 0, 0), times=(0.5,), samples=200))
    assert rep.bias["reference"] == "generator"
    assert rep.bias["escape_mass"] < 1e-6


def test_corner_time_scaling_in_report():
    spec = EnsembleSpec("corner", 6, 2, 1, D=1)
    cfg = small_bulk(ensemble=spec, times=(0.25,), samples=100)
    rep = run_bulk_convergence(cfg)
    assert rep.extra["c_N"] == str(qcalc.c_N(spec, 3))
    assert rep.extra["steps"] == [math.floor(qcalc.c_N(spec, 3) * 0.25)]


def test_warnings_for_violated_hypotheses():
    rep = run_bulk_convergence(small_bulk(r_N=1, times=(0.1,), samples=50))
    assert any("corank" in w for w in rep.warnings)
    assert any("window" in w for w in rep.warnings)


def edge_cfg(**kw):
    base = dict(experiment="edge", ensemble=EnsembleSpec("fixed_sn", 6, 2, 2, sn=(1,)), N=6, r_N=6, p=2, d=2,
                times=(0.0,), samples=100, seed=3, init=(2, 2, 1, 1, 0, 0), chunk=50)
    base.update(kw)
    return ExperimentConfig(**base)


def test_edge_zero_steps_point_mass():
    rep = run_edge_convergence(edge_cfg())
    assert rep.empirical == {"1,0,0,-inf,-inf": 1.0}
    assert rep.reference == {"1,0,0,-inf,-inf": pytest.approx(1.0)}


def test_edge_small_run_agrees():
    rep = run_edge_convergence(edge_cfg(times=(0.5,), samples=2000))
    assert rep.bias["reference"] == "generator" and rep.bias["states"] == 12
    assert rep.tv < 0.08


def test_lowest_part_nondecreasing():
    spec = EnsembleSpec("fixed_sn", 6, 2, 2, sn=(1,))
    snaps = run_chain_batch((2, 2, 1, 1, 0, 0), spec, 40, list(range(41)), RngHandle(4), 200)
    assert np.all(np.diff(snaps[:, :, -1], axis=0) >= 0)


def test_window_sanity_checks():
    with pytest.raises(AssertionError):
        _check_window([0, 1], 1)
    with pytest.raises(AssertionError):
        _check_window([3, 1], 2)
    cells = matrix_windows(np.array([[3, 1, 0]]), 2, 3, 2, 1)
    assert cells == ["2,1,0"]
    assert matrix_windows(np.array([[1, 0]]), 1, 2, 2, 1) == ["2,1,0"]
    assert matrix_windows(np.array([[1, 0]]), 2, 2, 2, 1) == ["1,0,-inf"]

import json
import subprocess
import sys

import pytest

from padic_sea.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_snf(capsys):
    code, out, _ = run(capsys, "snf", "--matrix", "[[2,3],[4,6]]", "--p", "2", "--d", "3")
    assert code == 0
    assert json.loads(out) == {"sn": [3, 0], "corank_mod_p": 1, "det_valuation": 3}


def test_formulas(capsys):
    code, out, _ = run(capsys, "formulas", "--name", "stay_prob", "--params", '{"r": 3, "N": 4, "len_lambda": 1, "t": "1/2"}')
    assert code == 0 and json.loads(out)["value"] == {"exact": "4/5", "float": 0.8}
    code, out, _ = run(capsys, "formulas", "--name", "rank_count_rect", "--params", '{"n": 2, "k": 2, "r": 1, "q": 2}')
    assert json.loads(out)["value"] == 9


def test_sample_histogram(capsys, tmp_path):
    out_file = tmp_path / "h.csv"
    code, _, _ = run(capsys, "sample", "--kind", "fixed_sn", "--N", "3", "--d", "3", "--sn", "[2,1]",
                     "--count", "20", "--seed", "1", "--histogram", "--out", str(out_file))
    assert code == 0
    assert out_file.read_text().splitlines() == ["sn,count", "2 1 0,20"]


def test_seed_required(capsys):
    code = None
    with pytest.raises(SystemExit) as exc:
        main(["sample", "--kind", "iid_haar", "--N", "2"])
    assert exc.value.code == 1


def test_sea_trajectory_and_histogram(capsys):
    code, out, _ = run(capsys, "sea", "--mode", "edge", "--init", "[1,0]", "--d", "2", "--T", "1", "--seed", "3")
    assert code == 0 and out.splitlines()[1] == "time,index,new_value"
    code, out, _ = run(capsys, "sea", "--mode", "approx2inf", "--init", '{"offset":0,"window":[],"left":0,"right":0}',
                       "--d", "1", "--T", "1", "--depth", "5", "--samples", "30", "--seed", "3")
    rows = out.splitlines()
    assert code == 0 and rows[0] == "state,count" and sum(int(r.split(",")[-1]) for r in rows[1:]) == 30


def test_sea_reproducible(capsys):
    argv = ["sea", "--mode", "finite", "--init", "[0,0,0]", "--T", "2", "--samples", "40", "--seed", "9"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_chain(capsys):
    code, out, _ = run(capsys, "chain", "--kind", "iid_haar", "--N", "3", "--steps", "2", "--record", "0,2",
                       "--samples", "10", "--seed", "1")
    rows = out.splitlines()
    assert code == 0 and rows[1] == "0,0 0 0,10"


def test_gen_prob(capsys):
    code, out, _ = run(capsys, "gen-prob", "--from", '{"offset":1,"window":[0],"left":1,"right":"-inf"}',
                       "--to", '{"offset":2,"window":[],"left":1,"right":"-inf"}', "--T", "1.0", "--d", "1")
    res = json.loads(out)
    assert code == 0 and abs(res["probability"] - (1 - 2.718281828459045 ** -0.5)) < 1e-12 and res["terms"] > 1


def test_experiment_and_warning_exit(capsys, tmp_path):
    cfg = {"experiment": "bulk", "ensemble": {"kind": "iid_haar", "N": 5, "p": 2, "d": 1}, "N": 5, "r_N": 1,
           "p": 2, "d": 1, "times": [0.1], "samples": 40, "depth": 5}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    code, _, err = run(capsys, "bulk-converge", "--config", str(path), "--seed", "2", "--out", str(out1))
    assert code == 2 and "warning" in err
    run(capsys, "bulk-converge", "--config", str(path), "--seed", "2", "--out", str(out2))
    assert out1.read_bytes() == out2.read_bytes()
    code, _, err = run(capsys, "bulk-converge", "--config", str(path))
    assert code == 1 and "seed" in err


def test_edge_converge_flags(capsys):
    code, out, _ = run(capsys, "edge-converge", "--kind", "fixed_sn", "--N", "4", "--d", "2", "--sn", "[1]",
                       "--init", "[2,1,0,0]", "--times", "0.5", "--samples", "200", "--seed", "4")
    assert code == 0 and json.loads(out)["bias"]["reference"] == "generator"


def test_compare(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.csv"
    a.write_text(json.dumps({"x": 30, "y": 70}))
    b.write_text("state,count\nx,1\ny,1\n")
    code, out, _ = run(capsys, "compare", "--a", str(a), "--b", str(b), "--n", "100")
    assert code == 0 and json.loads(out)["tv"] == pytest.approx(0.2)


def test_bad_input_exit_code(capsys):
    code, _, err = run(capsys, "snf", "--matrix", "not json", "--p", "2", "--d", "2")
    assert code == 1 and err.startswith("error:")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "padic_sea", "snf", "--matrix", "[[4]]", "--p", "2", "--d", "3"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["sn"] == [2]

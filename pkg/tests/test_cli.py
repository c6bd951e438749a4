import json

import numpy as np
import pytest

from reluapprox.cli import main
from reluapprox.dataset import generate_synthetic, save_dataset


@pytest.fixture()
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("x1,y\n1,1\n-1,-1\n")
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_classify(capsys, toy_csv):
    code, out = run_cli(capsys, "classify", "--input", toy_csv)
    assert code == 0
    report = json.loads(out)
    assert report["class"] == "orthogonal_separable"
    assert report["schema"] == "v1"


def test_solve_auto_two_point_line(capsys, toy_csv):
    code, out = run_cli(capsys, "solve", "--input", toy_csv, "--method", "auto", "--loss", "maxmargin")
    assert code == 0
    report = json.loads(out)
    assert report["method"] == "ortho"
    assert abs(report["p"] - 2.0) < 1e-6
    assert abs(report["factor"] - 1.0) < 1e-6
    assert report["certified"]


def test_solve_regime_mismatch_exit_3(capsys, tmp_path):
    path = tmp_path / "gen.csv"
    path.write_text("x1,x2,y\n1,0,1\n0.5,0.866,-1\n")
    code, out = run_cli(capsys, "solve", "--input", str(path), "--method", "ortho")
    assert code == 3
    report = json.loads(out)
    assert report["error"]["type"] == "WrongRegime"


def test_solve_deterministic_modulo_wall_time(capsys, tmp_path):
    ds = generate_synthetic("negative_correlation", 8, 2, seed=6)
    path = tmp_path / "nc.csv"
    save_dataset(ds, str(path))
    argv = ["solve", "--input", str(path), "--method", "negcorr", "--seed", "3", "--k", "40"]
    code1, out1 = run_cli(capsys, *argv)
    code2, out2 = run_cli(capsys, *argv)
    assert code1 == code2 == 0
    r1, r2 = json.loads(out1), json.loads(out2)
    r1.pop("wall_time_s"), r2.pop("wall_time_s")
    assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)


def test_solve_auto_never_selects_rejected_regime(capsys, tmp_path):
    for kind, expect in [
        ("orthogonal_separable", "ortho"),
        ("negative_correlation", "negcorr"),
        ("general", "geo"),
    ]:
        ds = generate_synthetic(kind, 8, 2, seed=1)
        path = tmp_path / f"{kind}.csv"
        save_dataset(ds, str(path))
        code, out = run_cli(
            capsys, "solve", "--input", str(path), "--method", "auto", "--seed", "0", "--k", "30"
        )
        assert code == 0, out
        assert json.loads(out)["method"] == expect


def test_verify_tampered_network(capsys, tmp_path, toy_csv):
    net_path = tmp_path / "net.json"
    code, out = run_cli(capsys, "solve", "--input", toy_csv, "--output", str(net_path))
    assert code == 0
    net = json.loads(net_path.read_text())
    net["w2"] = [0.1 * v for v in net["w2"]]  # tamper: margins collapse
    net_path.write_text(json.dumps(net))
    code, out = run_cli(capsys, "verify", "--network", str(net_path), "--input", toy_csv)
    assert code == 0  # verification is a query, not an error
    report = json.loads(out)
    assert report["feasible"] is False


def test_oracle_command(capsys, toy_csv):
    code, out = run_cli(capsys, "oracle", "--input", toy_csv)
    assert code == 0
    report = json.loads(out)
    assert abs(report["D"] - 2.0) < 1e-6
    assert abs(report["P_relu"] - 2.0) < 1e-6
    assert abs(report["c_star"] - 1.0) < 1e-6


def test_maxcut_command(capsys, tmp_path):
    rng = np.random.default_rng(0)
    B = rng.standard_normal((5, 5))
    Q = (B @ B.T / 5).tolist()
    path = tmp_path / "q.json"
    path.write_text(json.dumps(Q))
    code, out = run_cli(capsys, "maxcut", "--matrix", str(path), "--k", "2000")
    assert code == 0
    report = json.loads(out)
    assert report["opt"] <= report["sdp_bounds"][1] + 1e-6
    assert report["gw_lower_bound_check"]


def test_experiment_csv(capsys, tmp_path):
    out_path = tmp_path / "sweep.csv"
    code = main([
        "experiment", "--kind", "negcorr", "--n", "6", "--d", "2",
        "--seeds", "2", "--eps0", "0.1", "--output", str(out_path),
    ])
    assert code == 0
    lines = out_path.read_text().strip().splitlines()
    assert lines[0] == "seed,p,P_exact,ratio,feasible"
    assert len(lines) == 3
    for line in lines[1:]:
        parts = line.split(",")
        assert float(parts[3]) >= 1.0 - 1e-9  # p >= P


def test_usage_error_exit_2(capsys):
    code = main(["solve"])  # missing --input
    assert code == 2

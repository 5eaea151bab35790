import csv

import numpy as np
import pytest

from hetprobit.cli import EXIT_INVALID, _float_list, main, read_config
from hetprobit.errors import DomainError
from hetprobit.model import read_dataset


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("sim") / "sim.csv"
    assert main(["simulate", "--n", "40", "--seed", "3", "--out", str(path)]) == 0
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


FAST = ["--iterations", "120", "--burn-in", "60", "--normalized-column", "x1"]


def test_simulate_round_trip(sim_csv):
    data = read_dataset(sim_csv, normalized_column="x1")
    assert data.n == 40 and data.columns == ("x1", "x2") and data.theta_names == ("x2",)
    assert sim_csv.read_text().splitlines()[0] == "y,x1,x2"


def test_fit_outputs_and_byte_identical_rerun(sim_csv, tmp_path, capsys):
    args = ["fit", "--data", str(sim_csv), "--seed", "9", "--g-indices", "0,5"] + FAST
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert "x2" in capsys.readouterr().out
    for name in ("draws.csv", "summary.csv", "summary.json", "diagnostics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    draws = read_rows(tmp_path / "a" / "draws.csv")
    assert draws[0] == ["theta_x2", "g_0", "g_5"] and len(draws) == 61
    diag = read_rows(tmp_path / "a" / "diagnostics.csv")
    assert [r[0] for r in diag[1:]] == ["theta_x2", "g_0", "g_5", "loglik"]
    summary = read_rows(tmp_path / "a" / "summary.csv")
    assert summary[1][0] == "x2" and float(summary[1][2]) <= float(summary[1][1]) <= float(summary[1][3])


def test_predict_rows(sim_csv, tmp_path):
    out = tmp_path / "p"
    rc = main(["predict", "--data", str(sim_csv), "--x-star", "0,0", "--x-star", "1,0.5", "--out", str(out)] + FAST)
    assert rc == 0
    rows = read_rows(out / "predictions.csv")
    assert rows[0] == ["point", "x", "probability", "decision"]
    assert len(rows) == 3
    # x'beta = 0 at the origin for any coefficient draw
    assert float(rows[1][2]) == 0.5 and rows[1][3] == "1"
    assert 0 <= float(rows[2][2]) <= 1


def test_predict_points_file(sim_csv, tmp_path):
    pts = tmp_path / "pts.csv"
    pts.write_text("x1,x2\n0,0\n2,1\n-2,-1\n")
    out = tmp_path / "p"
    assert main(["predict", "--data", str(sim_csv), "--points", str(pts), "--out", str(out)] + FAST) == 0
    assert len(read_rows(out / "predictions.csv")) == 4


def test_config_file_with_override(sim_csv, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# fit config\ndata = {sim_csv}\niterations = 80\nburn-in = 40\nnormalized_column = x1\nseed = 2\n")
    out = tmp_path / "c"
    assert main(["fit", "--config", str(cfg), "--iterations", "100", "--out", str(out)]) == 0
    assert len(read_rows(out / "draws.csv")) == 61


def test_grouped_fit(tmp_path):
    rng = np.random.default_rng(0)
    n = 30
    path = tmp_path / "g.csv"
    with path.open("w") as fh:
        fh.write("y,d,x1,x2\n")
        for _ in range(n):
            fh.write(f"{rng.integers(0, 2)},{rng.integers(0, 2)},{rng.normal()},{rng.normal()}\n")
    out = tmp_path / "o"
    rc = main(["predict", "--data", str(path), "--group", "d", "--x-star", "1,0,0", "--out", str(out)] + FAST)
    assert rc == 0
    assert read_rows(out / "draws.csv")[0] == ["theta_d", "theta_x2", "gstar_0"]


def test_missing_outcome_column_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["fit", "--data", str(bad), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert "line 1" in capsys.readouterr().err


@pytest.mark.parametrize(
    "extra",
    [
        ["--alpha", "0"],
        ["--burn-in", "500"],
        ["--normalized-column", "zz"],
        ["--g-indices", "99"],
        ["--group", "nope"],
        ["--level", "1.5"],
    ],
)
def test_invalid_options_exit_2(sim_csv, tmp_path, extra):
    args = ["fit", "--data", str(sim_csv), "--iterations", "100", "--out", str(tmp_path / "o")] + extra
    assert main(args) == EXIT_INVALID


def test_predict_without_points_exits_2(sim_csv, tmp_path):
    assert main(["predict", "--data", str(sim_csv), "--out", str(tmp_path)] + FAST) == EXIT_INVALID


def test_missing_data_file(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "none.csv")]) == EXIT_INVALID


def test_collinear_data_exits_3(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("y,a,b,c\n1,1,2,1\n0,2,4,0\n1,3,6,5\n")
    assert main(["fit", "--data", str(path), "--iterations", "10", "--burn-in", "0", "--out", str(tmp_path / "o")]) == 3


def test_tiny_study(tmp_path):
    out = tmp_path / "study.csv"
    rc = main(
        ["replicate-study", "--n", "30", "--alphas", "1/2,3/2", "--replications", "2",
         "--iterations", "60", "--burn-in", "30", "--workers", "1", "--out", str(out)]
    )
    assert rc == 0
    rows = read_rows(out)
    assert rows[0][-1] == "status" and [r[0] for r in rows[1:]] == ["0.5", "1.5"]
    assert all(r[-1] == "ok" for r in rows[1:])


def test_helpers(tmp_path):
    assert _float_list("1/2, 3/2,2.5") == [0.5, 1.5, 2.5]
    cfg = tmp_path / "x.cfg"
    cfg.write_text("a-b = 1 # trailing\n\n# only comment\n")
    assert read_config(cfg) == {"a_b": "1"}
    cfg.write_text("novalue\n")
    with pytest.raises(DomainError):
        read_config(cfg)

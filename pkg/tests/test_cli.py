import json
import math
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from ncslaser import cli, figures

FIG1_FLAGS = ["--a0sq", "1", "--nu0", "1", "--mu0", "3", "--eta", "5"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


def test_solve_writes_valid_json_and_csv(tmp_path, capsys):
    code, out, _ = run(capsys, "solve", *FIG1_FLAGS, "--out", str(tmp_path))
    assert code == 0
    record = json.loads((tmp_path / "solution.json").read_text())
    jsonschema.validate(record, cli.schema())
    assert record["params"] == {"a0sq": 1.0, "nu0": 1.0, "mu0": 3.0, "eta": 5.0}
    assert len(record["d"]) == len(record["rhof"]) == record["nmax"] + 1
    assert len(record["f11"]) == record["nmax"]
    assert max(record["diagnostics"].values()) <= 1e-9
    header, rows = read_csv(tmp_path / "distributions.csv")
    assert header == ["n (photons)", "rho11 (probability)", "rho22 (probability)", "rhof (probability)"]
    assert sum(float(r[3]) for r in rows) == pytest.approx(1.0, abs=1e-12)
    # 17 significant digits round-trip the stored doubles
    assert [float(r[3]) for r in rows] == record["rhof"]


def test_raw_rates_reproduce_normalized_run(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    run(capsys, "solve", *FIG1_FLAGS, "--out", str(a))
    g = repr(math.sqrt(5.0))
    code, _, _ = run(capsys, "solve", "--kappa", "1", "--g", g, "--r12", "4", "--r21", "6", "--gamma", "1", "--out", str(b))
    assert code == 0
    ra = json.loads((a / "solution.json").read_text())["rhof"]
    rb = json.loads((b / "solution.json").read_text())["rhof"]
    assert len(ra) == len(rb)
    assert np.max(np.abs(np.array(ra) - np.array(rb))) <= 1e-9


def test_rounded_coupling_shifts_eta(tmp_path, capsys):
    # g = 2.2360679 gives eta = 4.99999994...; the field shifts at the 1e-8 level
    code, _, _ = run(capsys, "solve", "--kappa", "1", "--g", "2.2360679", "--r12", "4", "--r21", "6", "--gamma", "1", "--out", str(tmp_path), "--format", "json")
    assert code == 0
    rec = json.loads((tmp_path / "solution.json").read_text())
    assert rec["params"]["eta"] == pytest.approx(5.0, rel=1e-7)


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--a0sq", "1", "--nu0", "1", "--mu0", "3"],
        ["solve"],
        ["solve", *FIG1_FLAGS, "--g", "1"],
        ["solve", "--a0sq", "1", "--nu0", "-1", "--mu0", "3", "--eta", "5"],
        ["solve", *FIG1_FLAGS, "--tol", "0.1"],
        ["solve", *FIG1_FLAGS, "--nmax", "many"],
        ["figure", "fig9"],
        ["bogus"],
    ],
)
def test_usage_errors_exit_1(argv, tmp_path, capsys):
    code, _, err = run(capsys, *argv, "--out", str(tmp_path))
    assert code == 1
    assert "usage" in err


def test_missing_flag_via_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ncslaser.cli", "solve", "--a0sq", "1"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage" in proc.stderr


def test_check_passes_at_fig1(tmp_path, capsys):
    code, out, _ = run(capsys, "check", *FIG1_FLAGS, "--out", str(tmp_path))
    assert code == 0
    report = json.loads((tmp_path / "check_report.json").read_text())
    assert report["passed"] and report["failed"] == []
    names = {c["name"] for c in report["checks"]}
    assert {"pump_balance", "excited_field", "deviation_field", "ground_ladder", "oracle_distance", "oracle_robustness", "truncation"} <= names


def test_check_flags_truncation(tmp_path, capsys):
    code, _, err = run(capsys, "check", *FIG1_FLAGS, "--nmax", "3", "--out", str(tmp_path))
    assert code == 2
    assert "truncation" in err
    report = json.loads((tmp_path / "check_report.json").read_text())
    assert "truncation" in report["failed"]


def test_check_uncoupled(tmp_path, capsys):
    code, out, _ = run(capsys, "check", "--kappa", "1", "--g", "0", "--r12", "4", "--r21", "6", "--gamma", "1", "--out", str(tmp_path))
    assert code == 0
    assert "uncoupled_closed_form" in out


def test_io_failure_exit_3(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "solve", *FIG1_FLAGS, "--out", str(blocker / "sub"))
    assert code == 3
    assert "I/O" in err


def test_missing_config_is_io_failure(tmp_path, capsys):
    code, _, _ = run(capsys, "solve", "--config", str(tmp_path / "nope.conf"), "--out", str(tmp_path))
    assert code == 3


def test_config_precedence(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# fig1 with a wrong eta\na0sq = 1\nnu0 = 1\nmu0 = 3\neta = 50\nformat = json\n")
    code, _, _ = run(capsys, "solve", "--config", str(conf), "--eta", "5", "--out", str(tmp_path))
    assert code == 0
    assert json.loads((tmp_path / "solution.json").read_text())["params"]["eta"] == 5.0
    assert not (tmp_path / "distributions.csv").exists()
    conf.write_text("speed = 3\n")
    code, _, err = run(capsys, "solve", "--config", str(conf), "--out", str(tmp_path))
    assert code == 1 and "unknown key" in err


def test_format_csv_only(tmp_path, capsys):
    run(capsys, "solve", *FIG1_FLAGS, "--format", "csv", "--out", str(tmp_path))
    assert (tmp_path / "distributions.csv").exists()
    assert not (tmp_path / "solution.json").exists()


def test_determinism(tmp_path, capsys):
    for k in ("a", "b"):
        run(capsys, "solve", *FIG1_FLAGS, "--out", str(tmp_path / k))
        run(capsys, "figure", "fig4", "--out", str(tmp_path / k))
    for name in ("solution.json", "distributions.csv", "fig4.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_fig1_dataset(tmp_path, capsys):
    code, _, _ = run(capsys, "figure", "fig1", "--out", str(tmp_path))
    assert code == 0
    header, rows = read_csv(tmp_path / "fig1.csv")
    assert header[:5] == ["n (photons)", "d (dimensionless)", "lower (dimensionless)", "upper (dimensionless)", "asymptotic (dimensionless)"]
    assert len(rows) == 41
    vals = np.array(rows, dtype=float)
    d, runs = vals[:, 1], vals[:, 5:7]
    assert np.all(np.abs(runs - d[:, None]) <= 1e-10 * d[:, None])
    assert np.all((vals[:, 7] <= d) & (d <= vals[:, 8]))
    assert np.all(d < vals[:, 3])


def test_fig2_dataset(tmp_path, capsys):
    run(capsys, "figure", "fig2", "--out", str(tmp_path), "--format", "json")
    data = json.loads((tmp_path / "fig2.json").read_text())
    assert data["columns"][0] == "set"
    sets = {r[0] for r in data["rows"]}
    assert sets == set(figures.FIG2_SETS)
    coherent = [r for r in data["rows"] if r[0] == "coherent"]
    assert coherent[-1][1] == 300 and coherent[-1][2] == pytest.approx(1.0, rel=0.02)
    assert coherent[0][3] is None  # the expansion is undefined at n = 0


def test_fig3_dataset(tmp_path, capsys):
    run(capsys, "figure", "fig3", "--out", str(tmp_path))
    header, rows = read_csv(tmp_path / "fig3.csv")
    assert header[-1] == "rho_sc (probability)"
    by_set = {}
    for r in rows:
        by_set.setdefault(r[0], []).append([float(x) for x in r[2:]])
    assert set(by_set) == set(figures.FIG3_SETS)
    for vals in by_set.values():
        vals = np.array(vals)
        assert vals[:, 2].sum() == pytest.approx(1.0, abs=1e-12)
        assert vals[:, 3].sum() == pytest.approx(1.0, abs=1e-12)


def test_sweep_parallel_keeps_order(tmp_path, capsys):
    args = ["sweep", *FIG1_FLAGS, "--param", "eta", "--start", "5", "--stop", "200", "--points", "4", "--spacing", "log"]
    run(capsys, *args, "--out", str(tmp_path / "serial"))
    run(capsys, *args, "--jobs", "2", "--out", str(tmp_path / "parallel"))
    a = (tmp_path / "serial" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "parallel" / "sweep.csv").read_bytes()
    header, rows = read_csv(tmp_path / "serial" / "sweep.csv")
    assert header[0] == "eta (dimensionless)"
    eta = [float(r[0]) for r in rows]
    assert eta == sorted(eta) and eta[0] == pytest.approx(5) and eta[-1] == pytest.approx(200)


def test_sweep_rejects_bad_log_range(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", *FIG1_FLAGS, "--param", "a0sq", "--start", "0", "--stop", "1", "--points", "3", "--spacing", "log", "--out", str(tmp_path))
    assert code == 1

import io
import json
import subprocess
import sys
from fractions import Fraction

import pytest

from accperc.cli import OUTPUT_DIR_ENV, build_parser, parse_and_dispatch

from oracles import phi_oracle


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = parse_and_dispatch(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def parse_rows(text):
    rows = {}
    for line in text.splitlines():
        key, _, value = line.partition(" = ")
        rows[key] = value
    return rows


def test_phi_prints_a_bare_scalar():
    code, out, err = run("exact", "phi", "--k", "3", "--j", "5")
    assert code == 0
    assert float(out) == pytest.approx(float(Fraction(2, 30)), rel=1e-14)
    assert float(out) == pytest.approx(float(phi_oracle(3, 5)), rel=1e-14)
    assert "# k = 3" in err and "# j = 5" in err


def test_theta_and_moments():
    code, out, _ = run("exact", "theta", "--alpha", "1")
    assert code == 0 and float(out) == 1.0
    code, out, _ = run("exact", "moments", "--n", "2", "--k", "2")
    rows = parse_rows(out)
    assert float(rows["mean"]) == pytest.approx(2.0)
    assert float(rows["second_moment"]) == pytest.approx(16 / 3)


@pytest.mark.parametrize("argv", [
    ("exact", "phi", "--k", "3"),              # missing --j
    ("exact", "phi", "--k", "x", "--j", "5"),  # bad type
    ("exact", "nope",),                        # unknown operation
    ("exact", "phi", "--k", "5", "--j", "3"),  # domain error (J <= k)
    ("gfsolve", "survival", "--n", "5"),       # needs --k or --alpha
])
def test_usage_and_domain_errors_exit_1(argv):
    code, out, err = run(*argv)
    assert code == 1
    assert out == ""
    assert "error" in err


def test_help_exits_0_and_names_symbols(capsys):
    code, _, _ = run("experiment", "critical-window", "--help")
    assert code == 0
    text = capsys.readouterr().out
    assert "beta" in text and "log N" in text
    _, leaves = build_parser()
    helps = " ".join(lf.parser.format_help() for lf in leaves.values())
    for word in ("alpha", "beta", "epsilon", "lambda", "Lambda", "N, tree arity", "k, generation"):
        assert word in helps


def test_config_file_merges_and_flags_win(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# phi settings\nk = 2\nj = 9   # trailing comment\n")
    code, out, err = run("exact", "phi", "--config", str(cfg))
    assert code == 0 and float(out) == pytest.approx(float(phi_oracle(2, 9)), rel=1e-14)
    code, out, _ = run("exact", "phi", "--config", str(cfg), "--k", "3")
    assert code == 0 and float(out) == pytest.approx(float(phi_oracle(3, 9)), rel=1e-14)


def test_config_file_errors(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("k = 2\ncolour = red\n")
    code, _, err = run("exact", "phi", "--config", str(cfg), "--j", "4")
    assert code == 1 and "unknown key 'colour'" in err
    cfg.write_text("k 2\n")
    code, _, err = run("exact", "phi", "--config", str(cfg), "--j", "4")
    assert code == 1 and "bad.cfg:1" in err
    code, _, err = run("exact", "phi", "--config", str(tmp_path / "missing.cfg"))
    assert code == 1


def test_strict_precision_exit_2():
    code, out, err = run("gfsolve", "survival", "--n", "50", "--k", "135", "--m", "64", "--strict")
    assert code == 2
    assert parse_rows(out)["precision_warning"] == "true"
    assert "doubling the grid" in err
    code, _, _ = run("gfsolve", "survival", "--n", "50", "--k", "135", "--m", "64")
    assert code == 0


def test_simulate_survival_interval_contains_exact():
    code, out, err = run("simulate", "survival", "--n", "2", "--k", "2", "--replicates", "20000", "--seed", "7")
    assert code == 0
    rows = parse_rows(out)
    assert float(rows["ci95_low"]) <= 8 / 9 <= float(rows["ci95_high"])
    assert rows["seed"] == "7"
    # same seed, same answer
    assert run("simulate", "survival", "--n", "2", "--k", "2", "--replicates", "20000", "--seed", "7")[1] == out


def test_omitted_seed_is_drawn_and_echoed():
    code, out, err = run("simulate", "brute-force", "--n", "2", "--k", "2", "--replicates", "100")
    assert code == 0
    seed = int(parse_rows(out)["seed"])
    assert f"# seed = {seed}" in err


def test_coupling_and_F_and_G():
    rows = parse_rows(run("gfsolve", "coupling", "--n", "10", "--lambda-gw", "5", "--k", "5")[1])
    assert rows["passed"] == "true" and float(rows["max_violation"]) <= 1e-8
    rows = parse_rows(run("gfsolve", "F", "--k", "10", "--z-max", "20", "--m", "4000")[1])
    assert float(rows["max_abs_deviation"]) <= float(rows["envelope"])
    code, out, _ = run("gfsolve", "G", "--mu", "0", "--k", "3", "--n", "5")
    assert code == 0 and float(out) == 1.0


def test_experiment_writes_csv_manifest_svg(tmp_path):
    code, out, err = run("experiment", "critical-window", "--beta", "3", "--n-min", "20", "--n-max", "80",
                         "--output-dir", str(tmp_path))
    assert code == 0, err
    for f in ("critical_window.csv", "critical_window.manifest.json", "critical_window.svg"):
        assert (tmp_path / f).exists()
    d = json.loads((tmp_path / "critical_window.manifest.json").read_text())
    assert d["config"]["Ns"] == [20, 40, 80]  # doubling sweep
    code, out, err = run("experiment", "rerun", "--manifest", str(tmp_path / "critical_window.manifest.json"),
                         "--output-dir", str(tmp_path / "again"), "--threads", "4")
    assert code == 0 and parse_rows(out)["checksum_mismatches"] == "0"


def test_sweep_flag_conflicts():
    code, _, err = run("experiment", "decay-rate", "--ns", "100,200", "--n-min", "100", "--n-max", "200")
    assert code == 1 and "either" in err
    code, _, _ = run("experiment", "decay-rate", "--n-min", "100")
    assert code == 1


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env-out"))
    code, _, err = run("experiment", "critical-window", "--beta", "3", "--ns", "20,30,40")
    assert code == 0, err
    assert (tmp_path / "env-out" / "critical_window.csv").exists()


def test_experiment_domain_error_exit_1(tmp_path):
    code, _, err = run("experiment", "phase-curve", "--alpha", "3", "--n", "5", "--replicates", "2",
                       "--output-dir", str(tmp_path))
    assert code == 1 and "alpha < e" in err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "accperc", "exact", "theta", "--alpha", "2.718281828459045"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert abs(float(proc.stdout)) < 1e-15

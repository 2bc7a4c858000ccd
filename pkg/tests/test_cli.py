"""Config parsing, subcommand pipelines, exit codes, artifact layout."""

import csv
import shutil
from pathlib import Path

import numpy as np
import pytest

from hilbert_mfg.cli import (
    EXIT_AUDIT,
    EXIT_CONFIG,
    EXIT_OK,
    main,
    parse_run_config,
)

FP_INI = """
[problem]
eigenvalues = -1.0
m0 = dirac
m0_mean = 0.0
drift = zero

[numerics]
dt = 0.1
particles = 20000

[run]
seed = 0
"""

HJB_INI = """
[problem]
eigenvalues = -1.0
hamiltonian = zero
m0 = dirac
m0_mean = 0.0

[numerics]
dt = 0.1
particles = 2000
grid_points = 32
quad_nodes = 8
tau_nodes = 17

[run]
seed = 0
"""

MFG_INI = """
[problem]
model = cap1d_monotone

[numerics]
dt = 0.1
particles = 3000
grid_points = 32
quad_nodes = 8
tau_nodes = 17
fp_tol = 4e-2

[run]
seed = 9
"""

CHECK_ANTI_INI = """
[problem]
model = cap1d_antimonotone

[numerics]
dt = 0.1
particles = 2000
grid_points = 32
quad_nodes = 8
tau_nodes = 17
fp_max = 3

[run]
seed = 0
uniqueness = no
"""


def write_ini(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_malformed_config_names_the_field(tmp_path, capsys):
    bad = FP_INI.replace("dt = 0.1", "dt = 0.1\npicard_tol = -1e-4")
    code = main(["solve-fp", "--config", write_ini(tmp_path, bad),
                 "--out", str(tmp_path / "r")])
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "picard_tol" in err and "numerics" in err


def test_missing_seed_is_a_config_error(tmp_path, capsys):
    bad = FP_INI.replace("seed = 0", "")
    code = main(["solve-fp", "--config", write_ini(tmp_path, bad),
                 "--out", str(tmp_path / "r")])
    assert code == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_unknown_model_and_missing_file(tmp_path, capsys):
    bad = MFG_INI.replace("cap1d_monotone", "mystery")
    assert main(["solve-mfg", "--config", write_ini(tmp_path, bad),
                 "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    assert main(["solve-mfg", "--config", str(tmp_path / "absent.ini"),
                 "--out", str(tmp_path / "r2")]) == EXIT_CONFIG


def test_too_many_modes_rejected(tmp_path):
    bad = FP_INI.replace("eigenvalues = -1.0", "eigenvalues = -1 -2 -3 -4")
    assert main(["solve-fp", "--config", write_ini(tmp_path, bad),
                 "--out", str(tmp_path / "r")]) == EXIT_CONFIG


def test_existing_run_directory_is_refused(tmp_path):
    out = tmp_path / "taken"
    out.mkdir()
    code = main(["solve-fp", "--config", write_ini(tmp_path, FP_INI),
                 "--out", str(out)])
    assert code == EXIT_CONFIG


def test_solve_fp_variance_column_matches_closed_form(tmp_path):
    out = tmp_path / "fp"
    assert main(["solve-fp", "--config", write_ini(tmp_path, FP_INI),
                 "--out", str(out)]) == EXIT_OK
    rows = read_rows(out / "moments.csv")
    assert len(rows) > 5
    for row in rows:
        gap = abs(float(row["second_moment"]) - float(row["ou_variance"]))
        assert gap <= float(row["stderr3"]) + 1e-12
    res = read_rows(out / "residuals.csv")
    assert res[0]["op"] == "weak_form_residual"
    assert abs(float(res[0]["value"])) < max(float(res[0]["stderr3"]), 2e-2)
    assert (out / "config.echo").exists()
    assert (out / "m" / "times.csv").exists()


def test_solve_hjb_zero_hamiltonian_single_sweep(tmp_path):
    out = tmp_path / "hjb"
    assert main(["solve-hjb", "--config", write_ini(tmp_path, HJB_INI),
                 "--out", str(out)]) == EXIT_OK
    rows = read_rows(out / "iterations.csv")
    assert len(rows) == 1  # H == 0: the first correction already vanishes
    meta = {r["key"]: r["value"] for r in read_rows(out / "v" / "metadata.csv")}
    assert meta["status"] == "converged"
    assert float(meta["hjb_residual"]) < 1e-2


def test_solve_mfg_monotone_model_all_pass(tmp_path):
    out = tmp_path / "mfg"
    assert main(["solve-mfg", "--config", write_ini(tmp_path, MFG_INI),
                 "--out", str(out)]) == EXIT_OK
    audit = read_rows(out / "audit.csv")
    ops = {r["op"] for r in audit}
    assert "moment_bound_audit" in ops and "check_Qm0_membership" in ops
    assert all(r["result"] in ("pass", "info") for r in audit)
    summary = {r["key"]: r["value"] for r in read_rows(out / "summary.csv")}
    assert summary["status"] == "converged"
    assert summary["certified"] == "yes"
    assert int(summary["iterations"]) <= 50
    head = open(out / "iterations.csv").readline().strip()
    assert head == "iteration,rho_inf_change,psi_residual,wallclock"
    assert (out / "v" / "metadata.csv").exists()
    assert (out / "m" / "times.csv").exists()


def test_check_negative_control_fails_with_audit_exit(tmp_path, capsys):
    out = tmp_path / "chk"
    code = main(["check", "--config", write_ini(tmp_path, CHECK_ANTI_INI),
                 "--out", str(out)])
    assert code == EXIT_AUDIT  # distinguishable from a crash (exit 1)
    rows = read_rows(out / "check.csv")
    mono = [r for r in rows if r["op"] == "monotonicity_check"
            and r["metric"] == "min_pairing"]
    assert mono and mono[0]["result"] == "FAIL"
    assert float(mono[0]["value"]) < 0


def test_check_monotone_model_passes_with_uniqueness(tmp_path):
    ini = CHECK_ANTI_INI.replace("cap1d_antimonotone", "cap1d_monotone")
    ini = ini.replace("uniqueness = no", "uniqueness = yes")
    ini = ini.replace("fp_max = 3", "fp_max = 8\nfp_tol = 4e-2")
    out = tmp_path / "chk"
    assert main(["check", "--config", write_ini(tmp_path, ini),
                 "--out", str(out)]) == EXIT_OK
    rows = read_rows(out / "check.csv")
    ops = {r["op"] for r in rows}
    assert {"monotonicity_check", "assumption_check",
            "uniqueness_experiment"} <= ops
    uniq = [r for r in rows if r["metric"] == "rho_between"]
    assert np.isfinite(float(uniq[0]["value"]))


def test_seed_override_lands_in_echo(tmp_path):
    out = tmp_path / "fp"
    assert main(["solve-fp", "--config", write_ini(tmp_path, FP_INI),
                 "--out", str(out), "--seed", "123"]) == EXIT_OK
    echo = (out / "config.echo").read_text()
    assert "seed = 123" in echo


def test_threads_flag_validation(tmp_path, capsys):
    assert main(["solve-fp", "--config", write_ini(tmp_path, FP_INI),
                 "--out", str(tmp_path / "r"), "--threads", "0"]) == EXIT_CONFIG


def test_rerun_is_byte_identical_outside_wallclock(tmp_path):
    cfg = write_ini(tmp_path, MFG_INI)
    out = tmp_path / "run"
    assert main(["solve-mfg", "--config", cfg, "--out", str(out)]) == EXIT_OK
    keep = tmp_path / "first"
    shutil.move(str(out), str(keep))
    assert main(["solve-mfg", "--config", cfg, "--out", str(out)]) == EXIT_OK

    first = sorted(p.relative_to(keep) for p in keep.rglob("*") if p.is_file())
    second = sorted(p.relative_to(out) for p in out.rglob("*") if p.is_file())
    assert first == second
    for rel in first:
        a, b = (keep / rel), (out / rel)
        if rel.name == "iterations.csv":
            # wallclock is the one permitted difference
            ra = [row[:3] for row in csv.reader(open(a))]
            rb = [row[:3] for row in csv.reader(open(b))]
            assert ra == rb
        else:
            assert a.read_bytes() == b.read_bytes(), rel


def test_parse_run_config_roundtrip(tmp_path):
    cfg, cp = parse_run_config(write_ini(tmp_path, MFG_INI), "solve-mfg",
                               out_override=str(tmp_path / "o"))
    assert cfg.model == "cap1d_monotone"
    assert cfg.solver.fp_tol == pytest.approx(4e-2)
    assert cfg.solver.seed == 9
    assert cp.get("numerics", "grid_points") == "32"

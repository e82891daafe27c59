"""Command-line interface: exit codes, determinism, artifacts, export."""

import json
import os
import subprocess
import sys

import pytest

from pssforge.cli import main
from pssforge.coframe import coframe_to_json, equation_to_json
from pssforge.families import catalog


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_no_arguments_is_usage_error(capsys):
    code, _out, _err = run(capsys)
    assert code == 2


def test_unknown_subcommand_is_usage_error(capsys):
    code, _out, _err = run(capsys, "frobnicate")
    assert code == 2


def test_catalog_list_is_deterministic(capsys):
    code, out1, _ = run(capsys, "catalog", "list")
    assert code == 0
    assert len(out1.strip().splitlines()) == 15
    code, out2, _ = run(capsys, "catalog", "list")
    assert code == 0 and out1 == out2


def test_catalog_show_known_and_unknown(capsys):
    code, out, _ = run(capsys, "catalog", "show", "kdv")
    assert code == 0
    assert "z3" in out
    code, _out, err = run(capsys, "catalog", "show", "nls")
    assert code == 2
    assert "error" in err


def test_verify_branch_passes(capsys):
    code, out, _ = run(capsys, "verify", "--branch", "T33", "--delta", "-1",
                       "--sign", "+", "--lemma", "--zcr")
    assert code == 0
    doc = json.loads(out)
    assert doc["verification"]["ok"] is True
    assert doc["lemma"]["ok"] is True
    assert doc["zcr"]["ok"] is True


def test_verify_json_output_is_deterministic(capsys):
    args = ("verify", "--branch", "T32-II")
    _, out1, _ = run(capsys, *args)
    _, out2, _ = run(capsys, *args)
    assert out1 == out2


def test_verify_constraint_violation_is_usage_error(capsys):
    code, _out, err = run(capsys, "verify", "--branch", "T32-II",
                          "--params", '{"alpha": 0}')
    assert code == 2
    assert "alpha" in err


def test_verify_coframe_equation_files(tmp_path, capsys):
    inst = catalog("sine-gordon")
    cf = tmp_path / "cf.json"
    eq = tmp_path / "eq.json"
    cf.write_text(coframe_to_json(inst.coframe, inst.ctx))
    eq.write_text(equation_to_json(inst.equation))
    code, out, _ = run(capsys, "verify", "--coframe", str(cf),
                       "--equation", str(eq))
    assert code == 0
    assert json.loads(out)["verification"]["ok"] is True


def test_verify_mismatched_pair_fails(tmp_path, capsys):
    sg = catalog("sine-gordon")
    kdv = catalog("kdv")
    cf = tmp_path / "cf.json"
    eq = tmp_path / "eq.json"
    cf.write_text(coframe_to_json(sg.coframe, sg.ctx))
    eq.write_text(equation_to_json(kdv.equation))
    code, out, _ = run(capsys, "verify", "--coframe", str(cf),
                       "--equation", str(eq))
    assert code == 1
    assert json.loads(out)["verification"]["ok"] is False


def test_verify_corrupt_json_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "cf.json"
    bad.write_text("{not json")
    code, _out, err = run(capsys, "verify", "--coframe", str(bad),
                          "--equation", str(bad))
    assert code == 2
    assert "error" in err


def test_conservation_sine_gordon(capsys):
    code, out, _ = run(capsys, "conservation", "--catalog", "sine-gordon",
                       "--order", "2", "--closed-form")
    assert code == 0
    doc = json.loads(out)
    assert doc["closed_form"]["ok"] is True
    assert [p["order"] for p in doc["pairs"]] == [1, 2]
    assert all(p["verified"] for p in doc["pairs"])


def test_conservation_kdv_reports_failure(capsys):
    code, out, _ = run(capsys, "conservation", "--catalog", "kdv",
                       "--order", "2")
    assert code == 1
    doc = json.loads(out)
    assert "differential" in doc["error"]


def test_curvature_report_with_artifacts(tmp_path, capsys):
    code, out, _ = run(capsys, "curvature", "--catalog", "sine-gordon",
                       "--solution", "kink", "--nx", "120", "--nt", "120",
                       "--plot", "--outdir", str(tmp_path))
    assert code == 0
    doc = json.loads(out)
    assert doc["certification"]["passed"] is True
    assert doc["curvature"]["max_abs_K_plus_delta"] <= 1e-3
    files = sorted(os.listdir(tmp_path))
    assert any(f.endswith(".png") for f in files)
    assert any(f.endswith(".csv") for f in files)
    csv = next(f for f in files if f.endswith(".csv"))
    rows = (tmp_path / csv).read_text().strip().splitlines()
    assert len(rows) >= 100


def test_curvature_unknown_solution_is_usage_error(capsys):
    code, _out, err = run(capsys, "curvature", "--catalog", "sine-gordon",
                          "--solution", "breather")
    assert code == 2
    assert "error" in err


def test_export_latex(capsys):
    code, out, _ = run(capsys, "export", "--catalog", "kdv",
                       "--format", "latex")
    assert code == 0
    assert r"\begin{align*}" in out
    assert r"\omega_{1}" in out or r"\omega_1" in out


def test_export_to_file(tmp_path, capsys):
    target = tmp_path / "kdv.tex"
    code, _out, _err = run(capsys, "export", "--catalog", "kdv",
                           "--format", "latex", "-o", str(target))
    assert code == 0
    assert r"\documentclass" in target.read_text()


def test_selftest_green(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    doc = json.loads(out)
    assert all(doc["checks"].values())


def test_seed_env_override(capsys, monkeypatch):
    monkeypatch.setenv("PSSFORGE_SEED", "12345")
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    assert json.loads(out)["seed"] == 12345


def test_installed_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pssforge.cli",
                           "catalog", "list"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert len(proc.stdout.strip().splitlines()) == 15

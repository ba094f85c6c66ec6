import json
import subprocess
import sys

import pytest

from biofuse.cli import run_cli

SMALL = {"n_samples": 30, "n_cases": 15, "spectral_grid_size": 400, "n_true_peaks": 20, "n_panel_features": 8}


def run(capsys, *argv):
    code = run_cli([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    root = tmp_path_factory.mktemp("study")
    (root / "synth.json").write_text(json.dumps(SMALL))
    assert run_cli(["synth", "--config", str(root / "synth.json"), "--seed", "3", "--out-dir", str(root)]) == 0
    return root


def test_module_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "biofuse", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "paper-suite" in res.stdout


@pytest.mark.parametrize("cmd", ["synth", "preprocess", "peaks", "evaluate", "compare", "paper-suite"])
def test_subcommand_help(capsys, cmd):
    code, out, _ = run(capsys, cmd, "--help")
    assert code == 0 and "usage" in out


def test_usage_errors_exit_1(capsys):
    assert run(capsys)[0] == 1
    code, _, err = run(capsys, "frobnicate")
    assert code == 1 and "E:USAGE" in err
    code, _, err = run(capsys, "peaks", "--in", "x.csv")
    assert code == 1 and "E:USAGE" in err


def test_missing_input_exits_2(capsys, tmp_path):
    code, _, err = run(capsys, "preprocess", "--in", tmp_path / "none.csv", "--out", tmp_path / "o.csv")
    assert code == 2 and err.startswith("E:IO:")


def test_bad_config_exits_2(capsys, tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"n_cases": 0}))
    code, _, err = run(capsys, "synth", "--config", tmp_path / "bad.json", "--out-dir", tmp_path)
    assert code == 2 and err.startswith("E:CONFIG:")


def test_full_flow(capsys, study, tmp_path):
    code, out, _ = run(capsys, "preprocess", "--in", study / "spectra.csv", "--out", tmp_path / "pre.csv",
                       "--qc-report", tmp_path / "qc.json")
    assert code == 0 and "kept 30 of 30" in out
    qc = json.loads((tmp_path / "qc.json").read_text())
    assert qc["excluded"] == [] and len(qc["zscores"]) == 30

    code, out, _ = run(capsys, "peaks", "--in", tmp_path / "pre.csv", "--labels", study / "labels.csv",
                       "--out", tmp_path / "feat.csv", "--model", tmp_path / "pm.json", "--neighborhood", 2)
    assert code == 0
    code, _, _ = run(capsys, "peaks", "--in", tmp_path / "pre.csv", "--use-model", tmp_path / "pm.json",
                     "--out", tmp_path / "feat2.csv")
    assert code == 0
    assert (tmp_path / "feat.csv").read_text() == (tmp_path / "feat2.csv").read_text()

    exp = {
        "schema_version": 1,
        "inputs": {"features": "feat.csv", "panel": str(study / "panel.csv"), "labels": str(study / "labels.csv")},
        "split": {"n_repeats": 3, "seed": 1},
        "pipelines": [
            {"id": "panel_nb", "source": "B", "model": {"kind": "nb"}},
            {"id": "combo", "fusion": {"strategy": "composition", "base": {"A": {"kind": "svm"},
                                                                          "B": {"kind": "nb"}},
                                       "second_level": {"kind": "nb"}}},
        ],
    }
    (tmp_path / "exp.json").write_text(json.dumps(exp))
    code, out, _ = run(capsys, "evaluate", "--config", tmp_path / "exp.json", "--out", tmp_path / "rep.json",
                       "--tables-dir", tmp_path / "tables")
    assert code == 0 and "panel_nb" in out and "combo" in out
    assert (tmp_path / "tables" / "roc" / "combo.csv").exists()
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert [r["pipeline_id"] for r in rep["reports"]] == ["panel_nb", "combo"]

    code, out, _ = run(capsys, "compare", "--a", tmp_path / "rep.json", "--a-id", "combo",
                       "--b", tmp_path / "rep.json", "--b-id", "panel_nb", "--json")
    assert code == 0
    res = json.loads(out)
    assert res["a"] == "combo" and res["k"] == 3 and 0 <= res["p"] <= 1

    code, _, err = run(capsys, "compare", "--a", tmp_path / "rep.json", "--b", tmp_path / "rep.json")
    assert code == 2 and "E:DATA" in err


def test_compare_refuses_different_plans(capsys, tmp_path):
    base = {"n_train": 7, "n_test": 3, "per_repeat": {m: [0.1, 0.2] for m in
                                                      ("error", "sensitivity", "specificity", "auc")}}
    (tmp_path / "a.json").write_text(json.dumps({"pipeline_id": "a", "plan_fingerprint": "x", **base}))
    (tmp_path / "b.json").write_text(json.dumps({"pipeline_id": "b", "plan_fingerprint": "y", **base}))
    code, _, err = run(capsys, "compare", "--a", tmp_path / "a.json", "--b", tmp_path / "b.json")
    assert code == 2 and "PLAN" in err.split(":")[1]

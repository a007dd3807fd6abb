"""cli: subcommands, exit codes, determinism, and the golden eval regression."""

import filecmp
import json
import os

import pytest

from gsc.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, cli

# pinned from the first verified CLI run:
#   gen --seed 7 && eval --ratio 0.05 --rule zero --seed 7
GOLDEN_SEED7 = {
    "auroc_gsc": 1.0,
    "auroc_raw": 0.4732875,
    "fpr95": 0.0,
    "fpr95_raw": 1.0,
    "tau": 4.852499226033563,
}


@pytest.fixture(scope="module")
def small_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    cfg = out / "synth.json"
    cfg.write_text(json.dumps({"n_id": 50, "n_ood": 50, "n_cal": 40, "seed": 3}))
    assert cli(["gen", "--config", str(cfg), "--out", str(out / "data")]) == EXIT_OK
    return str(out / "data" / "manifest.json")


def _tree_bytes(root):
    out = {}
    for base, _, files in os.walk(root):
        for fn in sorted(files):
            path = os.path.join(base, fn)
            out[os.path.relpath(path, root)] = open(path, "rb").read()
    return out


def test_eval_without_manifest_is_usage_error(capsys):
    assert cli(["eval", "--out", "/tmp/x"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error():
    assert cli(["frobnicate"]) == EXIT_USAGE


def test_gen_twice_identical_trees(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = tmp_path / "synth.json"
    cfg.write_text(json.dumps({"n_id": 30, "n_ood": 30, "n_cal": 25}))
    assert cli(["gen", "--config", str(cfg), "--seed", "7", "--out", str(a)]) == EXIT_OK
    assert cli(["gen", "--config", str(cfg), "--seed", "7", "--out", str(b)]) == EXIT_OK
    ta, tb = _tree_bytes(a), _tree_bytes(b)
    assert ta.keys() == tb.keys()
    assert all(ta[k] == tb[k] for k in ta)


def test_eval_golden_regression(tmp_path):
    assert cli(["gen", "--seed", "7", "--out", str(tmp_path / "ds")]) == EXIT_OK
    assert cli(["eval", "--manifest", str(tmp_path / "ds" / "manifest.json"),
                "--ratio", "0.05", "--rule", "zero", "--seed", "7",
                "--out", str(tmp_path / "run")]) == EXIT_OK
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    for key in ("auroc_gsc", "auroc_raw", "fpr95", "fpr95_raw"):
        assert summary[key] == pytest.approx(GOLDEN_SEED7[key], abs=1e-9)
    assert summary["threshold"]["tau"] == pytest.approx(GOLDEN_SEED7["tau"], abs=1e-9)


def test_eval_byte_identical_runs(small_manifest, tmp_path):
    args = ["eval", "--manifest", small_manifest, "--seed", "5"]
    assert cli(args + ["--out", str(tmp_path / "r1")]) == EXIT_OK
    assert cli(args + ["--out", str(tmp_path / "r2")]) == EXIT_OK
    assert filecmp.cmp(tmp_path / "r1" / "report.csv", tmp_path / "r2" / "report.csv",
                       shallow=False)
    assert filecmp.cmp(tmp_path / "r1" / "summary.json", tmp_path / "r2" / "summary.json",
                       shallow=False)


def test_missing_manifest_is_data_error(tmp_path, capsys):
    rc = cli(["eval", "--manifest", str(tmp_path / "nope.json"),
              "--out", str(tmp_path / "out")])
    assert rc == EXIT_DATA
    assert "data error" in capsys.readouterr().err


def test_insufficient_calibration_is_numeric_error(tmp_path, capsys):
    cfg = tmp_path / "synth.json"
    cfg.write_text(json.dumps({"n_id": 25, "n_ood": 25, "n_cal": 10}))
    assert cli(["gen", "--config", str(cfg), "--out", str(tmp_path / "ds")]) == EXIT_OK
    rc = cli(["eval", "--manifest", str(tmp_path / "ds" / "manifest.json"),
              "--out", str(tmp_path / "out")])
    assert rc == EXIT_NUMERIC
    assert "numeric error" in capsys.readouterr().err


def test_bad_config_key_is_data_error(tmp_path):
    cfg = tmp_path / "synth.json"
    cfg.write_text(json.dumps({"n_samples": 10}))
    assert cli(["gen", "--config", str(cfg), "--out", str(tmp_path / "ds")]) == EXIT_DATA


def test_approx_error_audit(small_manifest, tmp_path):
    rc = cli(["approx-error", "--manifest", small_manifest,
              "--out", str(tmp_path / "audit")])
    assert rc == EXIT_OK
    lines = (tmp_path / "audit" / "approx_error.csv").read_text().splitlines()
    assert lines[0] == "sample_id,label,score_kind,gap_abs,remainder_bound,flops_approx,flops_exact"
    assert len(lines) == 1 + 2 * 100  # energy + msp rows per sample
    summary = json.loads((tmp_path / "audit" / "approx_error_summary.json").read_text())
    assert summary["energy"]["ID"]["max"] <= 1e-12  # affine head: no gap


def test_concentration_profile_csv(small_manifest, tmp_path):
    rc = cli(["concentration", "--manifest", small_manifest,
              "--k-values", "1,4,16,128", "--out", str(tmp_path / "conc")])
    assert rc == EXIT_OK
    lines = (tmp_path / "conc" / "concentration.csv").read_text().splitlines()
    assert lines[0] == "k,mean_id,std_id,mean_ood,std_ood,excluded"
    assert len(lines) == 5
    last = lines[-1].split(",")
    assert float(last[1]) == 1.0 and float(last[3]) == 1.0  # terminal k = d


def test_flops_report(small_manifest, tmp_path, capsys):
    rc = cli(["flops", "--manifest", small_manifest])
    assert rc == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["approx_path_total"] < payload["naive_path_total"]
    rc = cli(["flops", "--manifest", small_manifest, "--out", str(tmp_path / "f")])
    assert rc == EXIT_OK
    assert (tmp_path / "f" / "flops.json").exists()


def test_gen_tanh_preset(tmp_path):
    assert cli(["gen", "--preset", "tanh", "--seed", "2",
                "--out", str(tmp_path / "tds")]) == EXIT_OK
    man = json.loads((tmp_path / "tds" / "manifest.json").read_text())
    assert len(man["head"]) == 2
    assert man["head"][0]["activation"] == "tanh"
    rc = cli(["concentration", "--manifest", str(tmp_path / "tds" / "manifest.json"),
              "--k-values", f"4,{man['d']}", "--out", str(tmp_path / "conc")])
    assert rc == EXIT_OK
    lines = (tmp_path / "conc" / "concentration.csv").read_text().splitlines()
    k4 = lines[1].split(",")
    assert float(k4[3]) - float(k4[1]) >= 0.10  # OOD concentration above ID


def test_eval_all_flags(small_manifest, tmp_path):
    rc = cli(["eval", "--manifest", small_manifest, "--ratio", "0.1",
              "--rule", "scale", "--strategy", "top_grad_times_feature",
              "--rounds", "2", "--score", "msp", "--seed", "3",
              "--approx-mode", "both", "--out", str(tmp_path / "r")])
    assert rc == EXIT_OK
    summary = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert summary["mean_gap"] is not None
    assert 0.0 <= summary["auroc_gsc"] <= 1.0


def test_eval_config_file_with_flag_override(small_manifest, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"ratio": 0.1, "score": "msp", "calibrate_on": "raw"}))
    rc = cli(["eval", "--manifest", small_manifest, "--config", str(cfg),
              "--score", "energy", "--out", str(tmp_path / "r")])
    assert rc == EXIT_OK


def test_eval_output_dir_from_config(small_manifest, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"output_dir": str(tmp_path / "from_cfg")}))
    rc = cli(["eval", "--manifest", small_manifest, "--config", str(cfg)])
    assert rc == EXIT_OK
    assert (tmp_path / "from_cfg" / "summary.json").exists()


def test_eval_no_output_dir_is_usage_error(small_manifest):
    assert cli(["eval", "--manifest", small_manifest]) == EXIT_USAGE


def test_hist_csv(small_manifest, tmp_path):
    rc = cli(["hist", "--manifest", small_manifest, "--bins", "10",
              "--out", str(tmp_path / "h")])
    assert rc == EXIT_OK
    lines = (tmp_path / "h" / "hist.csv").read_text().splitlines()
    assert lines[0] == "bin_lo,bin_hi,id_count,ood_count"
    assert len(lines) == 11
    id_total = sum(int(l.split(",")[2]) for l in lines[1:])
    assert id_total == 50

import json
import os

import pytest

from vrscp.cli import main

CONFIG = """
seeds = [1, 2, 3]
probe_budget = 2000

[env]
kind = "gridworld"

[policy]
family = "softmax-tabular"

[algorithm]
name = "{algo}"
{params}
"""

VRSCP = "eps = 0.001\nrho = 0.1\nL = 1.0\nT = 50\nQ = 2\nb_check = 20\nb_h = 5\nc_S = 0.0001"
REINFORCE = "step_size = 0.5\nbatch = 2\nT = 1000"


def write_config(tmp_path, algo="vrscp", params=VRSCP, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(CONFIG.format(algo=algo, params=params))
    return str(path)


def outputs(d):
    return {f: (d / f).read_bytes() for f in sorted(os.listdir(d)) if f != "manifest.json"}


def test_run_writes_records_and_manifest(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == 0
    files = os.listdir(tmp_path / "a")
    assert sorted(f for f in files if f.endswith(".jsonl")) == [
        "vrscp_seed1.jsonl", "vrscp_seed2.jsonl", "vrscp_seed3.jsonl"]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seeds"] == [1, 2, 3] and not manifest["failed"]
    assert len(manifest["config_hash"]) == 64
    assert capsys.readouterr().out.count("status=ok") == 3


def test_reruns_are_byte_identical_across_workers(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["run", cfg, "--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    assert main(["run", cfg, "--out", str(tmp_path / "b"), "--workers", "1"]) == 0
    assert main(["run", cfg, "--out", str(tmp_path / "c"), "--workers", "3"]) == 0
    a = outputs(tmp_path / "a")
    assert a == outputs(tmp_path / "b") == outputs(tmp_path / "c")


def test_bad_config_exits_before_sampling(tmp_path, capsys):
    cfg = write_config(tmp_path, params=VRSCP.replace("eps = 0.001", "eps = -0.1"))
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == 2
    assert "eps" in capsys.readouterr().err
    assert not (tmp_path / "a").exists()


def test_trace_files(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["run", cfg, "--out", str(tmp_path / "a"), "--trace"]) == 0
    head = (tmp_path / "a" / "vrscp_seed1_trace.csv").read_text().splitlines()[0]
    assert head == "solver,t,iteration,h_norm,model_value,grad_norm"


def test_eval_end_to_end(tmp_path, capsys):
    cfg = write_config(tmp_path, "reinforce", REINFORCE)
    out = tmp_path / "r"
    assert main(["run", cfg, "--out", str(out)]) == 0
    assert main(["eval", str(out / "*.jsonl"), "--n", "3", "--grid-step", "60", "--T", "1980"]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("algorithm=reinforce\tn=3\tT=1980\tgrid_step=60\tPR=")
    rep = json.loads((out / "pr_reinforce_n3.json").read_text())
    assert len(rep["lci"]) == 33
    assert (out / "pr_reinforce_n3_lci.png").exists()


def test_eval_too_few_records(tmp_path, capsys):
    cfg = write_config(tmp_path, "reinforce", REINFORCE)
    out = tmp_path / "r"
    assert main(["run", cfg, "--out", str(out)]) == 0
    assert main(["eval", str(out / "*.jsonl"), "--n", "4"]) != 0
    assert "need 4 records" in capsys.readouterr().err


def test_eval_mixed_tags(tmp_path, capsys):
    out = tmp_path / "mix"
    assert main(["run", write_config(tmp_path, "reinforce", REINFORCE), "--out", str(out)]) == 0
    assert main(["run", write_config(tmp_path, name="v.toml"), "--out", str(out)]) == 0
    assert main(["eval", str(out / "*.jsonl"), "--n", "6", "--no-plot"]) == 2
    assert "mix algorithm tags" in capsys.readouterr().err


def test_oracle_check_cubic(tmp_path, capsys):
    assert main(["oracle-check", "cubic", "--quick", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3
    summary = json.loads((tmp_path / "oracle_check_cubic.json").read_text())
    assert summary["passed"] is True


def test_unknown_suite_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["oracle-check", "nonsense"])
    assert exc.value.code == 2


def test_preset_prints_valid_toml(tmp_path, capsys):
    assert main(["preset", "walker"]) == 0
    path = tmp_path / "walker.toml"
    path.write_text(capsys.readouterr().out)
    assert main(["run", str(path), "--out", str(tmp_path / "w")]) == 0

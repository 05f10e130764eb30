import json

import numpy as np
import pytest

from graphbo.cli import main
from graphbo.graph_core import ObservationSet

TINY = {"graph": {"type": "sbm", "n": 30, "blocks": [15, 15]},
        "objective": {"kind": "bandlimited", "k": 3},
        "method": {"d1": 4, "d2": 3, "init_epochs": 20},
        "T": 2, "N0": 3}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


def test_run_writes_outputs(tmp_path, tiny_config, capsys):
    out = tmp_path / "run"
    code = main(["run", "--config", str(tiny_config), "--seed", "7", "--out", str(out),
                 "--baselines", "random,bfs"])
    assert code == 0
    for name in ("trace_ours_seed7.csv", "trace_random_seed7.csv", "trace_bfs_seed7.csv",
                 "aggregate.csv", "summary.csv", "regret.svg", "config.json"):
        assert (out / name).exists()
    assert "final_regret" in capsys.readouterr().out


def test_flag_overrides_and_output_root(tmp_path, tiny_config, monkeypatch):
    monkeypatch.setenv("GRAPHBO_OUTPUT_ROOT", str(tmp_path / "root"))
    code = main(["baseline", "--method", "dfs", "--config", str(tiny_config),
                 "--seeds", "1,2", "--T", "4", "--out", "rel"])
    assert code == 0
    saved = json.loads((tmp_path / "root" / "rel" / "config.json").read_text())
    assert saved["T"] == 4 and saved["seeds"] == [1, 2]
    assert saved["method"]["name"] == "dfs"


def test_usage_and_config_errors(tmp_path, tiny_config, capsys):
    assert main(["run", "--bogus"]) == 1
    assert main([]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["run", "--config", str(tiny_config), "--T", "100"]) == 1
    assert main(["run", "--config", str(tiny_config), "--baselines", "oracle"]) == 1
    assert main(["--help"]) == 0
    capsys.readouterr()


def test_runtime_failure_exit_code(tmp_path, tiny_config):
    data = json.loads(tiny_config.read_text())
    data["method"].update(kernel="rbf", kernel_params={"sigma_f": -1.0}, gp_steps=0)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert (tmp_path / "o" / "summary.csv").exists()


def test_stats_command(tmp_path, capsys):
    obs = ObservationSet(4, [0, 1, 2], [1, 2, 3], [1.0, 1.0, 1.0])
    obs.save(tmp_path / "omega.txt")
    assert main(["stats", str(tmp_path / "omega.txt")]) == 0
    out = dict(line.split("\t") for line in capsys.readouterr().out.strip().splitlines())
    assert float(out["avg_degree"]) == 1.5
    assert float(out["degree_imbalance"]) == 0.5
    assert main(["stats", str(tmp_path / "nope.txt")]) == 2


def test_phase_command(tmp_path, capsys):
    out = tmp_path / "phase"
    code = main(["phase", "--n", "12", "--rank", "2", "--trials", "1", "--sizes", "0,66",
                 "--epochs", "50", "--out", str(out)])
    assert code == 0
    assert (out / "phase.csv").exists() and (out / "phase.svg").exists()
    assert "|Omega|=0\tsuccess=0.00" in capsys.readouterr().out


def test_ablate_command(tmp_path, tiny_config, capsys):
    out = tmp_path / "abl"
    code = main(["ablate", "--config", str(tiny_config), "--d1", "3,4", "--d2", "2",
                 "--out", str(out)])
    assert code == 0
    rows = (out / "ablation.csv").read_text().strip().splitlines()
    assert rows[0] == "d1,d2,mean_final_gap" and len(rows) == 3
    assert (out / "ablation.svg").exists()
    assert np.isfinite(float(rows[1].split(",")[2]))

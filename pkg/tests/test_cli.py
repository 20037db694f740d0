import io
import json

import pytest

from edge_forge import cli, neural
from edge_forge.config import from_dict, load_config
from edge_forge.errors import ConfigError
from edge_forge.validation import read_log, success_probability


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["train", "--episodes", "10", "--seed", "3", "--out", str(out)]) == 0
    return out


def test_train_writes_one_entry_per_episode(run_dir):
    lines = (run_dir / "episodes.jsonl").read_text().splitlines()
    assert len(lines) == 10
    assert [json.loads(x)["episode_id"] for x in lines] == list(range(10))
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["config"]["agent"]["max_episodes"] == 10
    assert manifest["config"]["world"]["seed"] == 3
    assert manifest["finished"] is not None
    assert (run_dir / "checkpoint_final.json").exists()


def test_override_is_recorded_in_manifest(tmp_path):
    code = cli.main(["train", "--episodes", "1", "--set", "agent.eps_min=0.5", "--out", str(tmp_path)])
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["agent"]["eps_min"] == 0.5


def test_missing_config_names_the_path(tmp_path, caplog):
    missing = tmp_path / "nope.json"
    assert cli.cmd_train(missing, tmp_path / "out") == 2
    assert str(missing) in caplog.text


def test_unknown_key_is_named(tmp_path, caplog):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"agent": {"epsilon_min": 0.1}}))
    assert cli.cmd_train(cfg, tmp_path / "out") == 2
    assert "agent.epsilon_min" in caplog.text


def test_config_validation():
    with pytest.raises(ConfigError, match="world.dt"):
        from_dict({"world": {"dt": "fast"}})
    with pytest.raises(ConfigError):
        from_dict({"physics": {}})
    with pytest.raises(ConfigError):
        from_dict({"world": {"dt": -1.0}})
    assert load_config(None, ["rss.rho=0.75"]).rss.rho == 0.75


def test_manifest_is_accepted_as_config(run_dir):
    cfg = load_config(run_dir / "manifest.json")
    assert cfg.agent.max_episodes == 10 and cfg.agent.seed == 3


def test_rerun_from_manifest_is_byte_identical(run_dir, tmp_path):
    assert cli.cmd_train(run_dir / "manifest.json", tmp_path) == 0
    assert (tmp_path / "episodes.jsonl").read_bytes() == (run_dir / "episodes.jsonl").read_bytes()


def test_replay_whole_log_and_single_episode(run_dir):
    assert cli.cmd_replay(run_dir / "episodes.jsonl") == 0
    buf = io.StringIO()
    assert cli.cmd_replay(run_dir / "episodes.jsonl", 4, stream=buf) == 0
    text = buf.getvalue()
    assert "d_rss" in text and "episode 4:" in text


def test_replay_missing_id(run_dir):
    assert cli.cmd_replay(run_dir / "episodes.jsonl", 999) == 2


def test_replay_corrupted_entry(run_dir, tmp_path):
    lines = (run_dir / "episodes.jsonl").read_text().splitlines()
    doc = json.loads(lines[2])
    doc["timesteps"][3]["d_eucl"] += 1e-9
    lines[2] = json.dumps(doc)
    lines[5] = lines[5][: len(lines[5]) // 2]
    bad = tmp_path / "episodes.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    (tmp_path / "config.json").write_text((run_dir / "config.json").read_text())
    assert cli.cmd_replay(bad) == 4
    assert cli.cmd_replay(bad, 2) == 4
    assert cli.cmd_replay(bad, 5) == 4


def test_validate_partition_and_determinism(run_dir, tmp_path):
    ckpt = run_dir / "checkpoint_final.json"
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["validate", "--checkpoint", str(ckpt), "--episodes", "20", "--seed", "1",
                     "--out", str(a)]) == 0
    assert cli.cmd_validate(ckpt, None, 20, 1, b) == 0
    rep = json.loads((a / "validation_report.json").read_text())
    assert rep["success_count"] + rep["failure_count"] == 20
    assert (a / "episodes.jsonl").read_bytes() == (b / "episodes.jsonl").read_bytes()
    assert cli.cmd_replay(a / "episodes.jsonl") == 0


def test_validate_rejects_mismatched_dims(tmp_path):
    ckpt = tmp_path / "small.json"
    neural.save(neural.mlp_init((2, 8, 8, 40), 0), ckpt)
    assert cli.cmd_validate(ckpt, None, 5, 0, tmp_path / "v") == 2


def test_report_files_and_idempotence(run_dir):
    assert cli.cmd_report(run_dir) == 0
    rep = run_dir / "report"
    first = {p.name: p.read_bytes() for p in rep.iterdir()}
    assert {"summary.json", "cumulative_failures.csv", "reward_moving_average.csv",
            "cumulative_failures.svg", "reward_moving_average.svg", "top_edge_case.svg"} <= set(first)
    assert len((rep / "cumulative_failures.csv").read_text().splitlines()) == 11
    summary = json.loads((rep / "summary.json").read_text())
    assert summary["p_r"] == success_probability(read_log(run_dir / "episodes.jsonl"))
    assert cli.cmd_report(run_dir) == 0
    assert {p.name: p.read_bytes() for p in rep.iterdir()} == first


def test_report_on_empty_log(tmp_path):
    (tmp_path / "episodes.jsonl").write_text("")
    assert cli.cmd_report(tmp_path) == 2
    assert cli.cmd_report(tmp_path / "absent") == 2

import json
import subprocess
import sys

import numpy as np
import pytest

from acso import metrics as mt
from acso.cli import main as cli_main
from acso.config import RunConfig
from acso.env import Env
from acso.expert import ExpertPolicy
from acso.policies import NoopPolicy, RandomPolicy
from conftest import tiny_run_config


@pytest.fixture
def tiny_config_file(tmp_path):
    config = tiny_run_config()
    path = tmp_path / "tiny.json"
    config.dump(path)
    return path


def test_config_roundtrip(tiny_config_file):
    config = RunConfig.load(tiny_config_file)
    assert config.to_dict() == RunConfig.from_dict(config.to_dict()).to_dict()


def test_unknown_config_key_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"topologee": {}}))
    assert cli_main(["actions", "--config", str(path)]) == 2


def test_noop_policy_zero_action_cost(tmp_path):
    config = tiny_run_config()
    report = mt.evaluate(config, NoopPolicy(), episodes=3, seed_base=100, out_dir=tmp_path)
    assert report["action_cost"]["mean"] == 0.0


def test_quiet_episode_zero_plc_downtime(tmp_path):
    config = tiny_run_config(horizon=30)
    for name, p in config.attacker.act_prob.items():
        config.attacker.act_prob[name] = 0.0
    report = mt.evaluate(config, NoopPolicy(), episodes=2, seed_base=0, out_dir=tmp_path)
    assert report["plc_downtime"]["mean"] == 0.0
    assert report["compromise_time"]["mean"] > 0.0  # the seed foothold persists


def test_report_matches_hand_recomputation(tmp_path):
    config = tiny_run_config()
    env = Env(config)
    policy = RandomPolicy(env.n_actions)
    report = mt.evaluate(config, policy, episodes=4, seed_base=50, out_dir=tmp_path)
    logs = sorted(tmp_path.glob("ep_*.jsonl"))
    assert len(logs) == 4
    returns, costs, downtime, comp = [], [], [], []
    for path in logs:
        header, steps, _ = read = mt.read_log(path)
        gamma, total, disc = header["config"]["gamma"], 0.0, 1.0
        cost_sum = 0.0
        down = 0
        it_off = 0
        for line in steps:
            total += disc * line["task"]
            disc *= gamma
            cost_sum += sum(c[2] for c in line["completed"])
            down += line["off_plcs"]
            it_off += line["comp_ws"] + line["comp_srv"]
        returns.append(total)
        costs.append(10.0 * cost_sum / len(steps))
        downtime.append(down)
        comp.append(it_off / len(steps))
    assert report["task_return"]["mean"] == pytest.approx(np.mean(returns), abs=1e-12)
    assert report["action_cost"]["mean"] == pytest.approx(np.mean(costs), abs=1e-12)
    assert report["plc_downtime"]["mean"] == pytest.approx(np.mean(downtime), abs=1e-12)
    assert report["compromise_time"]["mean"] == pytest.approx(np.mean(comp), abs=1e-12)
    # standard error convention: sample std over sqrt(N)
    assert report["task_return"]["se"] == pytest.approx(np.std(returns, ddof=1) / np.sqrt(4), abs=1e-12)


def test_replay_verifies_fresh_logs(tmp_path):
    config = tiny_run_config()
    env = Env(config)
    policy = RandomPolicy(env.n_actions)
    path = tmp_path / "ep.jsonl"
    mt.run_episode(env, policy, 42, log_path=path)
    verdict = mt.replay_verify(path)
    assert verdict.ok


def test_replay_detects_tampered_reward(tmp_path):
    config = tiny_run_config()
    env = Env(config)
    path = tmp_path / "ep.jsonl"
    mt.run_episode(env, RandomPolicy(env.n_actions), 43, log_path=path)
    lines = path.read_text().splitlines()
    target = len(lines) // 2
    record = json.loads(lines[target])
    assert record["type"] == "step"
    record["reward"] = record["reward"] + 0.125
    lines[target] = json.dumps(record, sort_keys=True, separators=(",", ":"))
    path.write_text("\n".join(lines) + "\n")
    verdict = mt.replay_verify(path)
    assert not verdict.ok
    assert verdict.first_divergence == record["t"]


def test_expert_episode_replays(tmp_path):
    config = tiny_run_config()
    env = Env(config)
    expert = ExpertPolicy(config.expert, env.obs_spec, env.action_table)
    path = tmp_path / "ep.jsonl"
    mt.run_episode(env, expert, 7, log_path=path)
    assert mt.replay_verify(path).ok


def test_cross_process_rollouts_are_byte_identical(tmp_path, tiny_config_file):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        proc = subprocess.run(
            [sys.executable, "-m", "acso", "rollout", "--config", str(tiny_config_file),
             "--policy", "random", "--episodes", "2", "--seed-base", "11", "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
    for name in ("ep_00000011.jsonl", "ep_00000012.jsonl"):
        assert mt.log_digest(out_a / name) == mt.log_digest(out_b / name)


def test_in_process_rollout_matches_subprocess(tmp_path, tiny_config_file):
    config = RunConfig.load(tiny_config_file)
    env = Env(config)
    policy = RandomPolicy(env.n_actions)
    mine = tmp_path / "mine"
    mine.mkdir()
    mt.run_episode(env, policy, 11, log_path=mine / "ep_00000011.jsonl")
    theirs = tmp_path / "theirs"
    proc = subprocess.run(
        [sys.executable, "-m", "acso", "rollout", "--config", str(tiny_config_file),
         "--policy", "random", "--episodes", "1", "--seed-base", "11", "--out", str(theirs)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert mt.log_digest(mine / "ep_00000011.jsonl") == mt.log_digest(theirs / "ep_00000011.jsonl")


def test_cli_actions_dump(tiny_config_file, capsys):
    assert cli_main(["actions", "--config", str(tiny_config_file), "--compact"]) == 0
    table = json.loads(capsys.readouterr().out)
    assert len(table) == 1 + 4 * 7 + 1 * 6 + 6 * 2
    assert table[0] == {"index": 0, "verb": "noop", "target": -1, "kind": None, "cost": 0.0, "duration": 0}


def test_cli_obs_schema_dump(tiny_config_file, capsys):
    assert cli_main(["obs-schema", "--config", str(tiny_config_file), "--compact"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["frame_width"] == 4 * 16 + 14 + 6 * 7
    assert schema["tau"] == 16
    assert [len(schema["bits"][k]) for k in ("workstation", "server", "plc")] == [16, 14, 7]


def test_cli_replay_exit_codes(tmp_path, tiny_config_file, capsys):
    out = tmp_path / "roll"
    assert cli_main(["rollout", "--config", str(tiny_config_file), "--policy", "noop",
                     "--episodes", "1", "--seed-base", "3", "--out", str(out)]) == 0
    capsys.readouterr()
    log = out / "ep_00000003.jsonl"
    assert cli_main(["replay", "--log", str(log)]) == 0
    lines = log.read_text().splitlines()
    record = json.loads(lines[5])
    record["frame"] = [0] + record["frame"]
    lines[5] = json.dumps(record, sort_keys=True, separators=(",", ":"))
    log.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert cli_main(["replay", "--log", str(log)]) == 3


def test_cli_apt_overrides(tiny_config_file, tmp_path, capsys):
    out = tmp_path / "o"
    assert cli_main(["rollout", "--config", str(tiny_config_file), "--policy", "noop",
                     "--episodes", "1", "--seed-base", "0", "--out", str(out),
                     "--apt-goal", "destroy", "--apt-vector", "exploit"]) == 0
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["attacker"]["goal"] == "destroy_equipment"
    assert resolved["attacker"]["vector"] == "remote_exploit"
    header, steps, _ = mt.read_log(out / "ep_00000000.jsonl")
    assert header["config"]["attacker"]["goal"] == "destroy_equipment"


def test_resolved_config_reproduces_run(tmp_path, tiny_config_file, capsys):
    out1 = tmp_path / "r1"
    assert cli_main(["rollout", "--config", str(tiny_config_file), "--policy", "random",
                     "--episodes", "1", "--seed-base", "9", "--out", str(out1)]) == 0
    out2 = tmp_path / "r2"
    assert cli_main(["rollout", "--config", str(out1 / "resolved_config.json"), "--policy", "random",
                     "--episodes", "1", "--seed-base", "9", "--out", str(out2)]) == 0
    assert mt.log_digest(out1 / "ep_00000009.jsonl") == mt.log_digest(out2 / "ep_00000009.jsonl")


def test_eval_logs_never_include_shaping(tmp_path):
    config = tiny_run_config()
    env = Env(config)
    path = tmp_path / "ep.jsonl"
    mt.run_episode(env, RandomPolicy(env.n_actions), 77, log_path=path)
    _, steps, _ = mt.read_log(path)
    for line in steps:
        assert line["reward"] == line["task"]  # eval mode: task reward only


def test_checkpoint_policy_roundtrip(tmp_path, tiny_config_file, capsys):
    from acso.cli import _make_policy
    from acso.numerics import save_checkpoint
    from acso.qnet import build_qnet

    config = RunConfig.load(tiny_config_file)
    env = Env(config)
    net = build_qnet(env.obs_spec, config.qnet, seed=3)
    save_checkpoint(tmp_path / "ck", net.params)
    policy = _make_policy(f"checkpoint:{tmp_path / 'ck'}", env, config)
    policy.reset(0)
    window = env.reset(0).observation
    action = policy.action(window)
    assert 0 <= action < env.n_actions
    report = mt.evaluate(config, policy, episodes=2, seed_base=5, out_dir=tmp_path / "ev")
    assert report["episodes"] == 2

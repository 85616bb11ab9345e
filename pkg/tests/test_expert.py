import math

import numpy as np

from acso.config import ExpertConfig
from acso.env import Env
from acso.expert import ExpertPolicy
from acso.metrics import run_episode
from acso.observation import ObservationWindow
from acso.policies import NoopPolicy, RandomPolicy
from conftest import tiny_run_config


def _setup(expert_cfg=None, **cfg_overrides):
    config = tiny_run_config(**cfg_overrides)
    if expert_cfg is not None:
        config.expert = expert_cfg
    env = Env(config)
    expert = ExpertPolicy(config.expert, env.obs_spec, env.action_table)
    return config, env, expert


def welch_p_one_sided(a, b):
    """P(mean(a) <= mean(b)) under Welch's t with a normal approximation."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    return 0.5 * math.erfc(t / math.sqrt(2.0))


def test_all_zero_window_yields_noop():
    cfg, env, expert = _setup(ExpertConfig(sweep=False, epsilon=0.0))
    window = ObservationWindow(env.obs_spec.tau, env.obs_spec.frame_width)
    expert.reset(0)
    for _ in range(5):
        assert expert.action(window) == 0


def test_disrupted_plc_bit_triggers_restart():
    cfg, env, expert = _setup(ExpertConfig(epsilon=0.0))
    window = ObservationWindow(env.obs_spec.tau, env.obs_spec.frame_width)
    plc = int(env.topology.plc_ids[2])
    frame = np.zeros(env.obs_spec.frame_width, dtype=np.float32)
    frame[env.obs_spec.bit_index(plc, "status_disrupted")] = 1.0
    window.push(frame)
    expert.reset(0)
    action = env.action_table[expert.action(window)]
    assert action.verb == "restart_plc" and action.target == plc


def test_destroyed_plc_bit_triggers_restore_logic():
    cfg, env, expert = _setup(ExpertConfig(epsilon=0.0))
    window = ObservationWindow(env.obs_spec.tau, env.obs_spec.frame_width)
    plc = int(env.topology.plc_ids[0])
    frame = np.zeros(env.obs_spec.frame_width, dtype=np.float32)
    frame[env.obs_spec.bit_index(plc, "status_destroyed")] = 1.0
    window.push(frame)
    expert.reset(0)
    action = env.action_table[expert.action(window)]
    assert action.verb == "restore_logic" and action.target == plc


def test_alert_triggers_scan_of_that_node():
    cfg, env, expert = _setup(ExpertConfig(epsilon=0.0, sweep=False))
    window = ObservationWindow(env.obs_spec.tau, env.obs_spec.frame_width)
    frame = np.zeros(env.obs_spec.frame_width, dtype=np.float32)
    frame[env.obs_spec.bit_index(1, "ids_auth_anomaly")] = 1.0
    window.push(frame)
    expert.reset(0)
    action = env.action_table[expert.action(window)]
    assert action.verb == "scan_host" and action.target == 1


def test_finding_triggers_remediation_ladder():
    cfg, env, expert = _setup(ExpertConfig(epsilon=0.0, sweep=False))
    window = ObservationWindow(env.obs_spec.tau, env.obs_spec.frame_width)
    frame = np.zeros(env.obs_spec.frame_width, dtype=np.float32)
    frame[env.obs_spec.bit_index(2, "finding_user")] = 1.0
    window.push(frame)
    expert.reset(0)
    action = env.action_table[expert.action(window)]
    assert action.verb == "change_password" and action.target == 2


def test_admin_finding_jumps_to_reimage():
    cfg, env, expert = _setup(ExpertConfig(epsilon=0.0, sweep=False))
    window = ObservationWindow(env.obs_spec.tau, env.obs_spec.frame_width)
    frame = np.zeros(env.obs_spec.frame_width, dtype=np.float32)
    frame[env.obs_spec.bit_index(2, "finding_admin")] = 1.0
    window.push(frame)
    expert.reset(0)
    action = env.action_table[expert.action(window)]
    assert action.verb == "reimage" and action.target == 2


def test_tied_alert_scores_break_uniformly():
    cfg, env, _ = _setup(ExpertConfig(epsilon=0.0, sweep=False))
    frame = np.zeros(env.obs_spec.frame_width, dtype=np.float32)
    frame[env.obs_spec.bit_index(0, "ids_network_signature")] = 1.0
    frame[env.obs_spec.bit_index(3, "ids_network_signature")] = 1.0
    counts = {0: 0, 3: 0}
    trials = 10_000
    for i in range(trials):
        expert = ExpertPolicy(cfg.expert, env.obs_spec, env.action_table)
        expert.reset(i)
        window = ObservationWindow(env.obs_spec.tau, env.obs_spec.frame_width)
        window.push(frame)
        action = env.action_table[expert.action(window)]
        assert action.verb == "scan_host" and action.target in counts
        counts[action.target] += 1
    assert abs(counts[0] / trials - 0.5) < 0.02


def test_expert_never_acts_on_busy_nodes():
    config = tiny_run_config()
    env = Env(config)
    expert = ExpertPolicy(config.expert, env.obs_spec, env.action_table)
    durations = {a.index: a.duration for a in env.action_table}
    targets = {a.index: a.target for a in env.action_table}
    for seed in range(8):
        env.reset(seed)
        expert.reset(seed)
        busy_until: dict[int, int] = {}
        done, t = False, 0
        while not done:
            idx = expert.action(env.window)
            t += 1
            if idx != 0:
                node = targets[idx]
                assert busy_until.get(node, 0) <= t, f"expert re-targeted busy node {node} at t={t}"
                busy_until[node] = t + durations[idx]
            done = env.step(idx).done


def test_sweep_scans_rotate_deterministically():
    cfg, env, expert = _setup(ExpertConfig(epsilon=0.0, scan_cooldown=0))
    window = ObservationWindow(env.obs_spec.tau, env.obs_spec.frame_width)
    expert.reset(0)
    seen = []
    for _ in range(5):
        action = env.action_table[expert.action(window)]
        assert action.verb == "scan_host"
        seen.append(action.target)
        window.push(np.zeros(env.obs_spec.frame_width, dtype=np.float32))
    assert seen == [0, 1, 2, 3, 4]  # stalest-first, id-ordered round


def test_expert_beats_noop_and_random(tmp_path):
    config = tiny_run_config()
    env = Env(config)
    policies = {
        "expert": ExpertPolicy(config.expert, env.obs_spec, env.action_table),
        "noop": NoopPolicy(),
        "random": RandomPolicy(env.n_actions),
    }
    returns = {}
    for name, policy in policies.items():
        returns[name] = [run_episode(env, policy, 60_000 + i).task_return for i in range(100)]
    assert welch_p_one_sided(returns["expert"], returns["noop"]) < 0.01
    assert welch_p_one_sided(returns["expert"], returns["random"]) < 0.01


def test_disabling_investigation_remediates_on_alerts_directly():
    cfg, env, expert = _setup(ExpertConfig(epsilon=0.0, sweep=False, investigate_before_remediate=False))
    window = ObservationWindow(env.obs_spec.tau, env.obs_spec.frame_width)
    frame = np.zeros(env.obs_spec.frame_width, dtype=np.float32)
    frame[env.obs_spec.bit_index(1, "ids_process_anomaly")] = 1.0
    window.push(frame)
    expert.reset(0)
    action = env.action_table[expert.action(window)]
    assert action.verb == "change_password" and action.target == 1

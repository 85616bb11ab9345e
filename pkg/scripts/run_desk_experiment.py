"""Desk-scale end-to-end experiment: expert demos -> composite-loss
pre-training -> DQN fine-tuning -> 100-episode evaluation of every policy.

Produces, under the output directory:
  demos/            expert demonstration logs (training-mode rewards)
  pretrain/         pre-trained checkpoint + agreement history
  train/            fine-tuned checkpoints + metrics.csv
  eval_<policy>/    per-episode logs + report.json for each policy

Usage: python scripts/run_desk_experiment.py [config] [out_dir]
"""

import json
import sys
import time
from pathlib import Path

sys.path.insert(0, "src")

from acso import rl
from acso.config import RunConfig
from acso.env import Env
from acso.expert import ExpertPolicy
from acso.metrics import evaluate
from acso.numerics import save_checkpoint
from acso.policies import GreedyNetPolicy, NoopPolicy, RandomPolicy
from acso.qnet import build_qnet

DEMO_SEED_BASE = 20_000
EVAL_SEED_BASE = 555_000
EVAL_EPISODES = 100


def collect_demos(config: RunConfig, episodes: int, out_dir: Path) -> list[list[rl.StepRecord]]:
    env = Env(config, mode="train")
    expert = ExpertPolicy(config.expert, env.obs_spec, env.action_table)
    out_dir.mkdir(parents=True, exist_ok=True)
    demos = []
    for i in range(episodes):
        seed = DEMO_SEED_BASE + i
        env.reset(seed)
        expert.reset(seed)
        steps, done = [], False
        while not done:
            action = expert.action(env.window)
            result = env.step(action)
            steps.append(rl.StepRecord(action, result.reward, result.frame_bits.copy(), result.done))
            done = result.done
        demos.append(steps)
    return demos


def main() -> None:
    config_path = sys.argv[1] if len(sys.argv) > 1 else "configs/tiny.json"
    out = Path(sys.argv[2] if len(sys.argv) > 2 else "out/desk_experiment")
    out.mkdir(parents=True, exist_ok=True)
    config = RunConfig.load(config_path)
    config.dump(out / "resolved_config.json")
    t0 = time.time()

    def say(msg: str) -> None:
        print(f"[{time.time() - t0:7.0f}s] {msg}", flush=True)

    say("collecting expert demonstrations")
    demos = collect_demos(config, episodes=200, out_dir=out / "demos")
    say(f"{len(demos)} episodes, {sum(len(d) for d in demos)} steps")

    env = Env(config)
    net = build_qnet(env.obs_spec, config.qnet, seed=config.rl.seed)
    say(f"pre-training {net.param_count()} parameters")
    pre = rl.pretrain(
        demos, net, config.rl, env.obs_spec.tau, env.obs_spec.frame_width, config.gamma,
        action_class={a.index: a.verb for a in env.action_table}, log=say,
    )
    save_checkpoint(out / "pretrain" / "checkpoint", net.params)
    (out / "pretrain" / "history.json").write_text(
        json.dumps({"history": pre.history, "holdout_agreement": pre.holdout_agreement}, indent=2) + "\n"
    )
    say(f"holdout agreement {pre.holdout_agreement:.3f} over {pre.holdout_size} states")

    say("fine-tuning with RL")
    result = rl.train(config, net, demos, out_dir=out / "train", log=say)
    say(f"best in-training eval return {result.best_eval:.2f}")
    net.load_state(result.best_state)

    policies = {
        "tuned": GreedyNetPolicy(net),
        "expert": ExpertPolicy(config.expert, env.obs_spec, env.action_table),
        "random": RandomPolicy(env.n_actions),
        "noop": NoopPolicy(),
    }
    summary = {}
    for name, policy in policies.items():
        say(f"evaluating {name} over {EVAL_EPISODES} episodes")
        report = evaluate(config, policy, EVAL_EPISODES, EVAL_SEED_BASE, out / f"eval_{name}")
        summary[name] = {k: report[k] for k in ("task_return", "action_cost", "plc_downtime", "compromise_time")}
        say(f"  {name}: return {report['task_return']['mean']:.2f} +- {report['task_return']['se']:.2f}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    say("done")


if __name__ == "__main__":
    main()

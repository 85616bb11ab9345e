"""Command line interface.

Subcommands: actions, obs-schema, rollout, pretrain, train, eval, replay,
serve.  Exit codes: 0 ok, 2 config error, 3 determinism-replay failure.
Every run that produces outputs writes its fully resolved config next to
them, so results can be reproduced from the artifacts alone.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics as mt
from . import numerics as nm
from . import rl
from .config import ConfigError, RunConfig
from .env import Env
from .expert import ExpertPolicy
from .policies import GreedyNetPolicy, NoopPolicy, RandomPolicy
from .qnet import build_qnet

_GOAL_ALIASES = {"disrupt": "disrupt_process", "destroy": "destroy_equipment"}
_VECTOR_ALIASES = {"credential": "credential_theft", "exploit": "remote_exploit"}


def _load_config(args) -> RunConfig:
    config = RunConfig.load(args.config)
    if getattr(args, "apt_goal", None):
        config.attacker.goal = _GOAL_ALIASES.get(args.apt_goal, args.apt_goal)
    if getattr(args, "apt_vector", None):
        config.attacker.vector = _VECTOR_ALIASES.get(args.apt_vector, args.apt_vector)
    if getattr(args, "mode", None):
        config.mode = args.mode
    # re-validate after CLI overrides
    return RunConfig.from_dict(config.to_dict())


def _make_policy(name: str, env: Env, config: RunConfig):
    if name == "noop":
        return NoopPolicy()
    if name == "random":
        return RandomPolicy(env.n_actions)
    if name == "expert":
        return ExpertPolicy(config.expert, env.obs_spec, env.action_table)
    if name.startswith("checkpoint:"):
        net = build_qnet(env.obs_spec, config.qnet, seed=0)
        net.load_state(nm.load_checkpoint(name.split(":", 1)[1]))
        return GreedyNetPolicy(net)
    raise ConfigError(f"unknown policy {name!r} (use noop|random|expert|checkpoint:<dir>)")


def _write_resolved(config: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    config.dump(out_dir / "resolved_config.json")


def cmd_actions(args) -> int:
    config = _load_config(args)
    env = Env(config)
    print(json.dumps(env.action_schema(), indent=None if args.compact else 2))
    return 0


def cmd_obs_schema(args) -> int:
    config = _load_config(args)
    env = Env(config)
    print(json.dumps(env.obs_spec.to_schema_dict(), indent=None if args.compact else 2))
    return 0


def cmd_rollout(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    _write_resolved(config, out)
    env = Env(config)
    policy = _make_policy(args.policy, env, config)
    outcomes = []
    for i in range(args.episodes):
        seed = args.seed_base + i
        outcome = mt.run_episode(env, policy, seed, log_path=out / f"ep_{seed:08d}.jsonl")
        outcomes.append(outcome)
        print(f"episode seed={seed} steps={outcome.steps} return={outcome.task_return:.3f} cause={outcome.cause}")
    causes = {}
    for o in outcomes:
        causes[o.cause] = causes.get(o.cause, 0) + 1
    print(f"done: {len(outcomes)} episodes, causes={causes}")
    return 0


def _load_demo_dir(path: str) -> list[list[rl.StepRecord]]:
    files = sorted(Path(path).glob("ep_*.jsonl"))
    if not files:
        raise ConfigError(f"no demonstration logs (ep_*.jsonl) under {path}")
    episodes = []
    for f in files:
        _, steps, _ = mt.read_log(f)
        episodes.append(
            [
                rl.StepRecord(
                    action=s["action"],
                    reward=s["reward"],
                    frame_bits=np.asarray(s["frame"], dtype=np.int64),
                    done=s["done"],
                )
                for s in steps
            ]
        )
    return episodes


def cmd_pretrain(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    _write_resolved(config, out)
    env = Env(config)
    demos = _load_demo_dir(args.demos)
    net = build_qnet(env.obs_spec, config.qnet, seed=config.rl.seed)
    result = rl.pretrain(
        demos,
        net,
        config.rl,
        env.obs_spec.tau,
        env.obs_spec.frame_width,
        config.gamma,
        action_class={a.index: a.verb for a in env.action_table},
        log=lambda msg: print(msg, flush=True),
    )
    nm.save_checkpoint(out / "pretrained", net.params)
    (out / "pretrain_history.json").write_text(
        json.dumps({"history": result.history, "holdout_agreement": result.holdout_agreement}, indent=2) + "\n"
    )
    print(f"holdout agreement: {result.holdout_agreement:.3f} over {result.holdout_size} states")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    _write_resolved(config, out)
    env = Env(config)
    net = build_qnet(env.obs_spec, config.qnet, seed=config.rl.seed)
    if args.init:
        net.load_state(nm.load_checkpoint(args.init))
    demos = _load_demo_dir(args.demos) if args.demos else []
    result = rl.train(config, net, demos, out_dir=out, log=lambda msg: print(msg, flush=True))
    print(f"trained {len(result.metrics)} episodes, best eval return {result.best_eval:.3f}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    _write_resolved(config, out)
    env = Env(config)
    policy = _make_policy(args.policy, env, config)
    report = mt.evaluate(config, policy, args.episodes, args.seed_base, out)
    line = {k: report[k] for k in ("task_return", "action_cost", "plc_downtime", "compromise_time")}
    print(json.dumps({"policy": report["policy"], **line}, indent=2, sort_keys=True))
    return 0


def cmd_replay(args) -> int:
    verdict = mt.replay_verify(args.log)
    if verdict.ok:
        print(f"PASS {args.log}")
        return 0
    print(f"FAIL {args.log}: {verdict.message}", file=sys.stderr)
    return 3


def cmd_serve(args) -> int:
    """Line-delimited JSON protocol over stdio for foreign-language drivers.

    Observations travel as base64 little-endian float32 buffers of the
    flattened window.  With --log-dir each driven episode writes the same
    log a native rollout would.
    """
    config = _load_config(args)
    env = Env(config)
    log_dir = Path(args.log_dir) if args.log_dir else None
    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        config.dump(log_dir / "resolved_config.json")
    logger: mt.EpisodeLogger | None = None

    def reply(payload: dict) -> None:
        sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
        sys.stdout.flush()

    def obs_b64() -> str:
        return base64.b64encode(env.window.flat().astype("<f4").tobytes()).decode("ascii")

    for raw in sys.stdin:
        raw = raw.strip()
        if not raw:
            continue
        try:
            msg = json.loads(raw)
            op = msg["op"]
            if op == "handshake":
                reply(
                    {
                        "ok": True,
                        "n_actions": env.n_actions,
                        "tau": env.obs_spec.tau,
                        "frame_width": env.obs_spec.frame_width,
                        "flat_size": env.obs_spec.flat_size,
                        "gamma": env.gamma,
                        "mode": env.mode,
                    }
                )
            elif op == "reset":
                seed = int(msg["seed"])
                result = env.reset(seed)
                if logger is not None:
                    logger._fh.close()  # abandoned episode: no summary line
                logger = (
                    mt.EpisodeLogger(log_dir / f"ep_{seed:08d}.jsonl", config, seed, env.mode)
                    if log_dir is not None
                    else None
                )
                reply({"ok": True, "obs_b64": obs_b64(), "info": result.info})
            elif op == "step":
                result = env.step(int(msg["action"]))
                if logger is not None:
                    logger.record(int(msg["action"]), result)
                    if result.done:
                        logger.close()
                        logger = None
                reply(
                    {
                        "ok": True,
                        "obs_b64": obs_b64(),
                        "reward": result.reward,
                        "done": result.done,
                        "info": result.info,
                    }
                )
            elif op == "close":
                if logger is not None:
                    logger._fh.close()
                reply({"ok": True})
                return 0
            else:
                reply({"ok": False, "error": f"unknown op {op!r}"})
        except Exception as exc:  # surface engine errors to the driver
            reply({"ok": False, "error": f"{type(exc).__name__}: {exc}"})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acso", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--apt-goal", choices=sorted(set(_GOAL_ALIASES) | set(_GOAL_ALIASES.values())))
        p.add_argument("--apt-vector", choices=sorted(set(_VECTOR_ALIASES) | set(_VECTOR_ALIASES.values())))

    p = sub.add_parser("actions", help="dump the action table as JSON")
    add_config(p)
    p.add_argument("--compact", action="store_true")
    p.set_defaults(func=cmd_actions)

    p = sub.add_parser("obs-schema", help="dump the observation schema as JSON")
    add_config(p)
    p.add_argument("--compact", action="store_true")
    p.set_defaults(func=cmd_obs_schema)

    p = sub.add_parser("rollout", help="run seeded episodes with a fixed policy, writing logs")
    add_config(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["eval", "train"])
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("pretrain", help="composite-loss pre-training from demonstration logs")
    add_config(p)
    p.add_argument("--demos", required=True, help="directory of ep_*.jsonl rollout logs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="RL training (optionally from a pre-trained checkpoint)")
    add_config(p)
    p.add_argument("--out", required=True)
    p.add_argument("--init", help="checkpoint directory to start from")
    p.add_argument("--demos", help="demonstration logs kept in the replay buffer")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy over seeded episodes")
    add_config(p)
    p.add_argument("--policy", required=True, help="noop|random|expert|checkpoint:<dir>")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="re-simulate a log and verify bit-identical outputs")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="drive the environment over stdio (bridge endpoint)")
    add_config(p)
    p.add_argument("--log-dir", help="write episode logs like a native rollout")
    p.add_argument("--mode", choices=["eval", "train"])
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

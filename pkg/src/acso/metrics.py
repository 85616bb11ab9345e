"""Episode logs, evaluation metrics and the determinism replay gate.

Logs are JSON-lines: one header (seed, mode, fully resolved config), one
record per step carrying the reward breakdown and the sparse frame encoding,
and one summary.  Evaluation metrics are always recomputed from the logs on
disk rather than trusted from in-memory accumulators, so every reported
number can be audited from the artifacts alone.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import RunConfig
from .env import Env, StepResult

LOG_FORMAT_VERSION = 1


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class EpisodeLogger:
    """Writes one episode's JSON-lines log; shared by rollouts and serve."""

    def __init__(self, path: str | Path, config: RunConfig, seed: int, mode: str):
        self.path = Path(path)
        self._fh = open(self.path, "w")
        header = {
            "type": "header",
            "format": LOG_FORMAT_VERSION,
            "seed": seed,
            "mode": mode,
            "config": config.to_dict(),
        }
        self._fh.write(_dump(header) + "\n")
        self._steps = 0
        self._task_return = 0.0
        self._discount = 1.0
        self._gamma = config.gamma

    def record(self, action: int, result: StepResult) -> None:
        info = result.info
        line = {
            "type": "step",
            "t": info["t"],
            "action": action,
            "ack": info["ack"],
            "reward": result.reward,
            "task": info["task_reward"],
            "plc_factor": info["plc_factor"],
            "cost": info["action_cost"],
            "bonus": info["terminal_bonus"],
            "shaping": info["shaping"],
            "done": result.done,
            "cause": info["cause"],
            "tactic": info["tactic"],
            "off_plcs": info["off_nominal_plcs"],
            "comp_ws": info["compromised_ws"],
            "comp_srv": info["compromised_srv"],
            "completed": info["completed"],
            "frame": result.frame_bits.tolist(),
        }
        self._fh.write(_dump(line) + "\n")
        self._steps += 1
        self._task_return += self._discount * info["task_reward"]
        self._discount *= self._gamma

    def close(self) -> None:
        if self._fh.closed:
            return
        summary = {"type": "summary", "steps": self._steps, "task_return": self._task_return}
        self._fh.write(_dump(summary) + "\n")
        self._fh.close()


@dataclass
class EpisodeOutcome:
    seed: int
    steps: int
    task_return: float
    cause: str | None


def run_episode(
    env: Env,
    policy,
    seed: int,
    log_path: str | Path | None = None,
) -> EpisodeOutcome:
    env.reset(seed)
    policy.reset(seed)
    logger = EpisodeLogger(log_path, env.config, seed, env.mode) if log_path is not None else None
    task_return, discount = 0.0, 1.0
    steps = 0
    cause = None
    done = False
    while not done:
        action = policy.action(env.window)
        result = env.step(action)
        if logger is not None:
            logger.record(action, result)
        task_return += discount * result.info["task_reward"]
        discount *= env.gamma
        steps += 1
        done = result.done
        cause = result.info["cause"]
    if logger is not None:
        logger.close()
    return EpisodeOutcome(seed, steps, task_return, cause)


def read_log(path: str | Path) -> tuple[dict, list[dict], dict | None]:
    header = None
    steps = []
    summary = None
    with open(path) as fh:
        for raw in fh:
            line = json.loads(raw)
            if line["type"] == "header":
                header = line
            elif line["type"] == "step":
                steps.append(line)
            elif line["type"] == "summary":
                summary = line
    if header is None:
        raise ValueError(f"log {path} has no header")
    return header, steps, summary


# ---------------------------------------------------------------------------
# evaluation metrics (recomputed from logs)


def _mean_se(values: Sequence[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=np.float64)
    se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return {"mean": float(arr.mean()), "se": se}


def episode_metrics(header: dict, steps: list[dict]) -> dict[str, float]:
    gamma = header["config"]["gamma"]
    task_return, discount = 0.0, 1.0
    total_cost = 0.0
    plc_downtime = 0
    it_off_nominal = 0
    for line in steps:
        task_return += discount * line["task"]
        discount *= gamma
        total_cost += sum(c[2] for c in line["completed"])
        plc_downtime += line["off_plcs"]
        it_off_nominal += line["comp_ws"] + line["comp_srv"]
    n = max(1, len(steps))
    return {
        "task_return": task_return,
        "action_cost": 10.0 * total_cost / n,
        "plc_downtime": float(plc_downtime),
        "compromise_time": it_off_nominal / n,
        "steps": len(steps),
    }


def evaluation_report(log_paths: Sequence[str | Path]) -> dict[str, Any]:
    per_episode = []
    for path in log_paths:
        header, steps, _ = read_log(path)
        row = episode_metrics(header, steps)
        row["seed"] = header["seed"]
        per_episode.append(row)
    report: dict[str, Any] = {"episodes": len(per_episode), "per_episode": per_episode}
    for key in ("task_return", "action_cost", "plc_downtime", "compromise_time"):
        report[key] = _mean_se([row[key] for row in per_episode])
    return report


def evaluate(
    config: RunConfig,
    policy,
    episodes: int,
    seed_base: int,
    out_dir: str | Path,
) -> dict[str, Any]:
    """Run seeded episodes, write logs, and report means from those logs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = Env(config, mode="eval")
    paths = []
    for i in range(episodes):
        seed = seed_base + i
        path = out / f"ep_{seed:08d}.jsonl"
        run_episode(env, policy, seed, log_path=path)
        paths.append(path)
    report = evaluation_report(paths)
    report["policy"] = getattr(policy, "name", "unknown")
    report["seed_base"] = seed_base
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# ---------------------------------------------------------------------------
# determinism replay gate


@dataclass
class ReplayVerdict:
    ok: bool
    first_divergence: int | None = None
    message: str = ""


def replay_verify(log_path: str | Path) -> ReplayVerdict:
    """Re-simulate a log from (seed, action sequence); require bit equality."""
    header, steps, _ = read_log(log_path)
    config = RunConfig.from_dict(header["config"])
    env = Env(config, mode=header["mode"])
    env.reset(header["seed"])
    for line in steps:
        result = env.step(line["action"])
        checks = (
            ("reward", result.reward, line["reward"]),
            ("task", result.info["task_reward"], line["task"]),
            ("done", result.done, line["done"]),
            ("frame", result.frame_bits.tolist(), line["frame"]),
        )
        for name, got, want in checks:
            if got != want:
                return ReplayVerdict(False, line["t"], f"{name} diverged at t={line['t']}: {got!r} != {want!r}")
    return ReplayVerdict(True)


def log_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

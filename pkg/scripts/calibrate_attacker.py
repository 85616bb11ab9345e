"""Measure time-to-shutdown of the baseline attacker against a no-op defender.

Used to pick attacker defaults: the intrusion narrative wants a median
campaign of roughly 2,000-3,000 hours at one step per hour, while at least
95% of no-op episodes must still end in shutdown before the 5,000-step limit.

Usage: python scripts/calibrate_attacker.py [config] [episodes]
"""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from acso.config import RunConfig
from acso.env import Env


def main() -> None:
    config_path = sys.argv[1] if len(sys.argv) > 1 else "configs/default.json"
    episodes = int(sys.argv[2]) if len(sys.argv) > 2 else 100

    config = RunConfig.load(config_path)
    env = Env(config)
    lengths = []
    causes = {}
    t0 = time.time()
    for seed in range(episodes):
        result = env.reset(seed)
        while not result.done:
            result = env.step(0)
        lengths.append(result.info["t"])
        causes[result.info["cause"]] = causes.get(result.info["cause"], 0) + 1
    arr = np.array(lengths)
    shutdowns = causes.get("shutdown", 0)
    print(f"config: {config_path}, episodes: {episodes}, wall: {time.time() - t0:.1f}s")
    print(f"causes: {causes}  shutdown rate: {shutdowns / episodes:.3f}")
    print(
        "steps to terminal: "
        f"median={np.median(arr):.0f} mean={arr.mean():.0f} "
        f"p5={np.percentile(arr, 5):.0f} p95={np.percentile(arr, 95):.0f} max={arr.max()}"
    )


if __name__ == "__main__":
    main()

"""Episode orchestration: the seedable reset/step decision environment.

Step order is fixed: submit the defender action, advance defender timers,
let the attacker update its tactic and act, check termination, compute the
reward, then emit the observation frame.  A single episode seed is split
into named substreams (reset / attacker / observation) so adding a noise
consumer to one channel never perturbs the others.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import attacker as apt
from . import dynamics, reward
from .config import GOALS, VECTORS, ConfigError, RunConfig
from .dynamics import NodeStates
from .observation import ObservationSpec, ObservationWindow, emit_observation
from .topology import NetworkTopology, build_topology

# Substream indices under the episode seed.
_STREAM_RESET = 0
_STREAM_ATTACKER = 1
_STREAM_OBSERVATION = 2


@dataclass
class WorldState:
    topology: NetworkTopology
    nodes: NodeStates
    attacker: apt.AttackerState
    time: int = 0
    done: bool = False
    cause: str | None = None  # "shutdown" | "time_limit"


@dataclass
class StepResult:
    observation: ObservationWindow
    reward: float
    done: bool
    info: dict[str, Any]
    frame_bits: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int32))


def _substream(seed: int, key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key,))))


class Env:
    """One concurrent episode instance; never share one across threads."""

    def __init__(self, config: RunConfig, mode: str | None = None):
        self.config = config
        self.mode = mode if mode is not None else config.mode
        if self.mode not in ("eval", "train"):
            raise ConfigError(f"mode must be eval|train, got {self.mode!r}")
        self.topology = build_topology(config.topology)
        self.action_table = dynamics.action_table(self.topology, config.dynamics)
        self.obs_spec = ObservationSpec(self.topology, config.observation)
        self.gamma = config.gamma
        self.horizon = config.horizon
        self.window = ObservationWindow(self.obs_spec.tau, self.obs_spec.frame_width)
        self.world: WorldState | None = None
        self._rng_attacker: np.random.Generator | None = None
        self._rng_observation: np.random.Generator | None = None
        self.seed: int | None = None

    @property
    def n_actions(self) -> int:
        return len(self.action_table)

    def reset(self, seed: int) -> StepResult:
        self.seed = int(seed)
        rng_reset = _substream(self.seed, _STREAM_RESET)
        self._rng_attacker = _substream(self.seed, _STREAM_ATTACKER)
        self._rng_observation = _substream(self.seed, _STREAM_OBSERVATION)

        nodes = NodeStates(self.topology)
        l2_ws = self.topology.l2_workstation_ids
        if len(l2_ws) == 0:
            raise ConfigError("episodes need at least one level 2 workstation to seed the intrusion")
        foothold = int(l2_ws[rng_reset.integers(len(l2_ws))])
        nodes.compromise[foothold] = dynamics.CompromiseLevel.USER_ACCESS

        acfg = self.config.attacker
        goal = acfg.goal or GOALS[rng_reset.integers(len(GOALS))]
        vector = acfg.vector or VECTORS[rng_reset.integers(len(VECTORS))]
        state = apt.AttackerState(goal=goal, vector=vector, known={foothold})
        apt.sync_belief(state, nodes)

        self.world = WorldState(self.topology, nodes, state)
        self.window.reset()
        info = {
            "t": 0,
            "foothold": foothold,
            "goal": goal,
            "vector": vector,
            "tactic": apt.TACTIC_NAMES[state.tactic],
        }
        return StepResult(self.window, 0.0, False, info)

    def step(self, action_index: int) -> StepResult:
        world = self.world
        if world is None:
            raise RuntimeError("reset() must be called before step()")
        if world.done:
            raise RuntimeError("step() on a terminal episode")
        if not 0 <= action_index < self.n_actions:
            raise IndexError(f"action index {action_index} out of range [0, {self.n_actions})")

        nodes, state = world.nodes, world.attacker
        pre_ws, pre_srv = nodes.compromised_counts()

        # (1) defender submission, (2) defender timers and effects
        ack = dynamics.submit_action(nodes, self.action_table[action_index])
        completed = dynamics.tick_defender(nodes)
        for done_action in completed:
            if done_action.verb in dynamics.ATTACKER_CANCELLING_VERBS:
                state.cancel_involving(done_action.node)
            if done_action.verb in ("restart_plc", "restore_logic"):
                # either recovery wipes a staged-but-unfired payload
                state.unstage(done_action.node)

        # (3) attacker belief refresh, tactic update, sub-policy
        apt.sync_belief(state, nodes)
        apt.update_tactic(state, nodes, self.config.attacker)
        events = apt.attacker_step(state, nodes, self.config.attacker, self._rng_attacker)

        # (4) termination
        world.time += 1
        off_plcs = nodes.off_nominal_plcs()
        if off_plcs >= self.topology.plc_shutdown_threshold:
            world.done, world.cause = True, "shutdown"
        elif world.time >= self.horizon:
            world.done, world.cause = True, "time_limit"

        # (5) reward
        cost_sum = sum(c.cost for c in completed)
        breakdown = reward.task_reward(
            off_plcs, cost_sum, world.time, self.horizon, self.gamma, self.config.reward.plc_penalty
        )
        post_ws, post_srv = nodes.compromised_counts()
        shaping = reward.shaping_reward(
            post_ws - pre_ws,
            post_srv - pre_srv,
            self.config.reward.shaping_a,
            self.config.reward.shaping_b,
            self.gamma,
        )
        step_reward, breakdown = reward.combine(breakdown, shaping, self.config.reward, self.mode == "train")

        # (6) observation
        frame = emit_observation(self.obs_spec, nodes, completed, events, state.vector, self._rng_observation)
        self.window.push(frame.astype(np.float32))
        frame_bits = np.flatnonzero(frame).astype(np.int32)

        info = {
            "t": world.time,
            "ack": ack.value,
            "tactic": apt.TACTIC_NAMES[state.tactic],
            "off_nominal_plcs": off_plcs,
            "compromised_ws": post_ws,
            "compromised_srv": post_srv,
            "plc_factor": breakdown.plc_factor,
            "action_cost": breakdown.action_cost_sum,
            "terminal_bonus": breakdown.terminal_bonus,
            "task_reward": breakdown.task_reward,
            "shaping": breakdown.shaping,
            "cause": world.cause,
            "completed": [[c.node, c.verb, c.cost] for c in completed],
        }
        return StepResult(self.window, step_reward, world.done, info, frame_bits)

    def action_schema(self) -> list[dict[str, Any]]:
        return [
            {
                "index": a.index,
                "verb": a.verb,
                "target": a.target,
                "kind": a.kind.name.lower() if a.kind is not None else None,
                "cost": a.cost,
                "duration": a.duration,
            }
            for a in self.action_table
        ]

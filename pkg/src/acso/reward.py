"""Step reward: PLC availability scaled by action burden, terminal bonus,
and the training-only shaping term on compromised-count deltas."""

from __future__ import annotations

from dataclasses import dataclass

from .config import RewardConfig


@dataclass(frozen=True)
class RewardBreakdown:
    plc_factor: float
    action_cost_sum: float
    terminal_bonus: float
    task_reward: float
    shaping: float


def task_reward(
    off_nominal_plcs: int,
    completed_costs: float,
    time: int,
    horizon: int,
    gamma: float,
    plc_penalty: float,
) -> RewardBreakdown:
    """r = plc_factor * (1 - step action costs) + 1/gamma at the time limit.

    ``completed_costs`` sums the costs of defender actions completing this
    step; it is clamped at 1.0 so the product cannot flip sign when many
    actions land at once.  The PLC factor clamps at zero.
    """
    plc_factor = max(0.0, 1.0 - plc_penalty * off_nominal_plcs)
    cost_sum = min(1.0, completed_costs)
    bonus = 1.0 / gamma if time >= horizon else 0.0
    return RewardBreakdown(
        plc_factor=plc_factor,
        action_cost_sum=cost_sum,
        terminal_bonus=bonus,
        task_reward=plc_factor * (1.0 - cost_sum) + bonus,
        shaping=0.0,
    )


def shaping_reward(delta_ws: int, delta_srv: int, a: float, b: float, gamma: float) -> float:
    """gamma * (A*delta_W + B*delta_S) on the step's compromised-count deltas.

    With negative weights (the defaults), cleaning a node (delta < 0) earns a
    positive bonus and a fresh compromise costs the same amount.
    """
    return gamma * (a * delta_ws + b * delta_srv)


def combine(breakdown: RewardBreakdown, shaping: float, config: RewardConfig, train: bool) -> tuple[float, RewardBreakdown]:
    """Final step reward: task only in eval mode, + weighted shaping in train."""
    full = RewardBreakdown(
        plc_factor=breakdown.plc_factor,
        action_cost_sum=breakdown.action_cost_sum,
        terminal_bonus=breakdown.terminal_bonus,
        task_reward=breakdown.task_reward,
        shaping=shaping,
    )
    reward = full.task_reward + (config.shaping_weight * shaping if train else 0.0)
    return reward, full

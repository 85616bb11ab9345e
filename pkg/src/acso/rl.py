"""Training stack: n-step double-DQN with prioritized replay, plus the
large-margin composite loss used to pre-train from expert demonstrations.

The n-step target bootstraps with the action chosen by the policy network
and valued by the lagged target network; terminal transitions truncate the
bootstrap.  Pre-training minimizes TD loss plus a weighted large-margin
classification term that pushes the demonstrated action's value above every
alternative by a fixed margin; during RL fine-tuning the margin term keeps
applying to demonstration samples only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import numerics as nm
from .config import RunConfig, TrainConfig
from .env import Env
from .numerics import Tensor
from .observation import ObservationWindow
from .qnet import greedy_action, q_forward
from .replay import NStepAssembler, PrioritizedBuffer, ReplayEntry, SparseWindow, densify


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class StepRecord:
    """One step of a demonstration episode, as read from a rollout log."""

    action: int
    reward: float
    frame_bits: np.ndarray
    done: bool


def n_step_targets(
    entries: Sequence[ReplayEntry],
    policy_net,
    target_net,
    gamma: float,
    n: int,
) -> np.ndarray:
    """Double-DQN n-step targets for a batch of replay entries.

    target_i = R_i + gamma^n * Q_target(h_{t+n}, argmax_a Q_policy(h_{t+n}, a))
    with the bootstrap dropped when the episode ended inside the span.
    """
    targets = np.array([e.reward_n for e in entries], dtype=np.float64)
    live = [i for i, e in enumerate(entries) if not e.done]
    if live:
        boot = densify([entries[i].bootstrap for i in live])
        q_policy = q_forward(policy_net, boot)
        chosen = q_policy.argmax(axis=1)
        q_target = q_forward(target_net, boot)
        values = q_target[np.arange(len(live)), chosen]
        for j, i in enumerate(live):
            targets[i] += (gamma**n) * float(values[j])
    return targets


def td_loss(
    entries: Sequence[ReplayEntry],
    weights: np.ndarray,
    policy_net,
    target_net,
    gamma: float,
    n: int,
    priority_eps: float,
    huber_delta: float = 1.0,
) -> tuple[Tensor, np.ndarray]:
    """Importance-weighted Huber TD loss and the refreshed priorities."""
    targets = n_step_targets(entries, policy_net, target_net, gamma, n)
    windows = densify([e.window for e in entries])
    actions = np.array([e.action for e in entries], dtype=np.int64)
    q_all = policy_net.forward(windows)
    loss, new_priorities, _ = _td_from_q(q_all, actions, targets, weights, priority_eps, huber_delta)
    return loss, new_priorities


def _td_from_q(q_all, actions, targets, weights, priority_eps, huber_delta):
    q_taken = nm.take_per_row(q_all, actions)
    residual = nm.sub(nm.constant(targets.astype(np.float32)), q_taken)
    loss = nm.tsum(nm.mul(nm.constant(weights.astype(np.float32)), nm.huber(residual, huber_delta)))
    new_priorities = np.abs(targets - q_taken.data.astype(np.float64)) + priority_eps
    return loss, new_priorities, q_taken


def composite_step(
    entries: Sequence[ReplayEntry],
    weights: np.ndarray,
    policy_net,
    target_net,
    gamma: float,
    cfg: TrainConfig,
    opt: "nm.Adam",
    demo_only_margin: bool,
) -> tuple[float, float, np.ndarray]:
    """One optimizer update on a sampled batch; shares a single forward pass
    between the TD and margin terms.  Returns (td, margin, priorities)."""
    targets = n_step_targets(entries, policy_net, target_net, gamma, cfg.n_step)
    windows = densify([e.window for e in entries])
    actions = np.array([e.action for e in entries], dtype=np.int64)
    q_all = policy_net.forward(windows)
    loss_td, priorities, _ = _td_from_q(q_all, actions, targets, weights, cfg.priority_eps, cfg.huber_delta)
    total = loss_td
    margin_value = 0.0
    demo_mask = np.array([e.is_demo for e in entries], dtype=bool)
    if cfg.margin_lambda > 0.0 and (demo_mask.any() or not demo_only_margin):
        mask = demo_mask if demo_only_margin else None
        loss_lm = margin_from_q(q_all, actions, cfg.margin_delta, cfg.margin_form, sample_mask=mask)
        total = nm.add(total, nm.scale(loss_lm, cfg.margin_lambda))
        margin_value = float(loss_lm.item())
    if not math.isfinite(total.item()):
        raise TrainingDiverged("non-finite training loss")
    nm.zero_grads(policy_net.params)
    total.backward()
    opt.step()
    return float(loss_td.item()), margin_value, priorities


def margin_values(q_row: np.ndarray, expert_action: int, delta: float, form: str) -> float:
    """Reference (numpy) large-margin loss for one state; mirrors margin_loss."""
    a = np.arange(len(q_row))
    if form == "standard":
        aug = q_row + delta * (a != expert_action)
    else:  # "doubled": the candidate's Q enters the penalty term as well
        aug = np.where(a == expert_action, q_row, 2.0 * q_row - q_row[expert_action] + delta)
    return float(aug.max() - q_row[expert_action])


def margin_from_q(
    q_all: Tensor,
    expert_actions: np.ndarray,
    delta: float,
    form: str = "standard",
    sample_mask: np.ndarray | None = None,
) -> Tensor:
    """Large-margin term computed from an existing Q forward pass.

    ``sample_mask`` zeroes the contribution of non-demonstration samples so
    the fine-tuning loop can keep the margin on demo entries only.
    """
    batch, n_actions = q_all.shape
    q_expert = nm.take_per_row(q_all, expert_actions)
    if form == "standard":
        penalty = np.full((batch, n_actions), delta, dtype=np.float32)
        penalty[np.arange(batch), expert_actions] = 0.0
        aug = nm.add(q_all, nm.constant(penalty))
    elif form == "doubled":
        # aug = Q + off * (Q - Q_e + delta): the candidate Q enters twice
        off = np.ones((batch, n_actions), dtype=np.float32)
        off[np.arange(batch), expert_actions] = 0.0
        diff = nm.sub(q_all, _expand_cols(q_expert, n_actions))
        aug = nm.add(q_all, nm.add(nm.mul(nm.constant(off), diff), nm.constant(off * delta)))
    else:
        raise ValueError(f"unknown margin form {form!r}")
    per_sample = nm.sub(nm.row_max(aug), q_expert)
    if sample_mask is not None:
        per_sample = nm.mul(per_sample, nm.constant(sample_mask.astype(np.float32)))
    return nm.tsum(per_sample)


def margin_loss(
    windows: np.ndarray,
    expert_actions: np.ndarray,
    net,
    delta: float,
    form: str = "standard",
    sample_mask: np.ndarray | None = None,
) -> Tensor:
    """Summed large-margin classification loss over a batch of states."""
    return margin_from_q(net.forward(windows), expert_actions, delta, form, sample_mask)


def _expand_cols(v: Tensor, n: int) -> Tensor:
    """(B,) -> (B, n) by repetition, kept differentiable."""
    return nm.matmul(nm.reshape(v, (v.shape[0], 1)), nm.constant(np.ones((1, n), dtype=np.float32)))


# ---------------------------------------------------------------------------
# demonstration ingestion


def entries_from_episode(
    steps: Sequence[StepRecord],
    tau: int,
    width: int,
    n: int,
    gamma: float,
    is_demo: bool = False,
) -> list[ReplayEntry]:
    """Rebuild n-step entries by replaying an episode's logged frames."""
    window = ObservationWindow(tau, width)
    assembler = NStepAssembler(n, gamma)
    entries: list[ReplayEntry] = []
    before = SparseWindow.from_window(window)
    for step in steps:
        frame = np.zeros(width, dtype=np.float32)
        frame[step.frame_bits] = 1.0
        window.push(frame)
        after = SparseWindow.from_window(window)
        for entry in assembler.push(before, step.action, step.reward, after, step.done):
            entry.is_demo = is_demo
            entries.append(entry)
        before = after
    return entries


@dataclass
class PretrainResult:
    history: list[dict]
    holdout_agreement: float
    holdout_size: int


def balance_oversample(
    entries: list[ReplayEntry],
    action_class: dict[int, str] | None,
    exponent: float,
    cap: int,
) -> list[ReplayEntry]:
    """Duplicate rare-action-class entries so sampling sees them.

    Duplicates share the underlying entry (windows are never copied); they
    just occupy extra priority slots.
    """
    if exponent <= 0.0 or not entries:
        return entries
    key = (lambda e: action_class[e.action]) if action_class else (lambda e: e.action)
    counts: dict = {}
    for e in entries:
        counts[key(e)] = counts.get(key(e), 0) + 1
    top = max(counts.values())
    out = []
    for e in entries:
        copies = min(cap, max(1, int(round((top / counts[key(e)]) ** exponent))))
        out.extend([e] * copies)
    return out


def agreement_rate(net, windows: list[SparseWindow], actions: np.ndarray, chunk: int = 64) -> float:
    hits = 0
    for start in range(0, len(windows), chunk):
        dense = densify(windows[start : start + chunk])
        q = q_forward(net, dense)
        hits += int(np.sum(q.argmax(axis=1) == actions[start : start + chunk]))
    return hits / max(1, len(windows))


def pretrain(
    demo_episodes: Sequence[Sequence[StepRecord]],
    net,
    cfg: TrainConfig,
    tau: int,
    width: int,
    gamma: float,
    action_class: dict[int, str] | None = None,
    log: Callable[[str], None] | None = None,
) -> PretrainResult:
    """Composite-loss pre-training over expert demonstrations."""
    if not demo_episodes:
        raise ValueError("pretraining needs at least one demonstration episode")
    rng = np.random.default_rng(cfg.seed)

    n_hold = max(1, int(round(cfg.holdout_fraction * len(demo_episodes)))) if len(demo_episodes) > 1 else 0
    holdout_eps = list(demo_episodes[:n_hold])
    train_eps = list(demo_episodes[n_hold:])

    train_entries: list[ReplayEntry] = []
    for ep in train_eps:
        train_entries.extend(entries_from_episode(ep, tau, width, cfg.n_step, gamma, is_demo=True))
    train_entries = balance_oversample(
        train_entries, action_class, cfg.pretrain_oversample, cfg.pretrain_oversample_cap
    )
    hold_windows: list[SparseWindow] = []
    hold_actions: list[int] = []
    for ep in holdout_eps:
        for e in entries_from_episode(ep, tau, width, cfg.n_step, gamma, is_demo=True):
            hold_windows.append(e.window)
            hold_actions.append(e.action)
    hold_actions_arr = np.asarray(hold_actions, dtype=np.int64)

    buffer = PrioritizedBuffer(len(train_entries), cfg.alpha, cfg.priority_eps)
    for e in train_entries:
        buffer.add_demo(e)

    target = net.clone()
    opt = nm.Adam(net.params, lr=cfg.pretrain_lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    history = []
    for update in range(1, cfg.pretrain_updates + 1):
        idx, batch, weights = buffer.sample(cfg.batch_size, cfg.beta_end, rng)
        try:
            td_value, margin_value, priorities = composite_step(
                batch, weights, net, target, gamma, cfg, opt, demo_only_margin=False
            )
        except TrainingDiverged as exc:
            raise TrainingDiverged(f"{exc} (pretraining update {update})") from exc
        buffer.update_priorities(idx, priorities)
        if update % cfg.pretrain_target_sync == 0:
            target.load_state(net.state_dict())
        if update % max(1, cfg.pretrain_updates // 10) == 0 or update == cfg.pretrain_updates:
            row = {"update": update, "td_loss": td_value, "margin_loss": margin_value}
            if hold_windows:
                row["holdout_agreement"] = agreement_rate(net, hold_windows, hold_actions_arr)
            history.append(row)
            if log:
                log(f"pretrain update {update}: {row}")

    final_agreement = agreement_rate(net, hold_windows, hold_actions_arr) if hold_windows else float("nan")
    return PretrainResult(history, final_agreement, len(hold_windows))


# ---------------------------------------------------------------------------
# RL fine-tuning


@dataclass
class TrainResult:
    metrics: list[dict]
    final_state: dict[str, np.ndarray]
    best_state: dict[str, np.ndarray]
    best_eval: float
    env_steps: int


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    if step >= cfg.eps_decay_steps:
        return cfg.eps_end
    frac = step / cfg.eps_decay_steps
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


def beta_at(episode: int, cfg: TrainConfig) -> float:
    if episode >= cfg.beta_episodes:
        return cfg.beta_end
    frac = episode / cfg.beta_episodes
    return cfg.beta_start + (cfg.beta_end - cfg.beta_start) * frac


def evaluate_greedy(net, config: RunConfig, episodes: int, seed_base: int) -> float:
    """Mean discounted task return of the greedy policy, eval-mode env."""
    env = Env(config, mode="eval")
    returns = []
    for i in range(episodes):
        result = env.reset(seed_base + i)
        total, discount = 0.0, 1.0
        while not result.done:
            action = greedy_action(net, env.window.array2d())
            result = env.step(action)
            total += discount * result.info["task_reward"]
            discount *= config.gamma
        returns.append(total)
    return float(np.mean(returns))


def train(
    config: RunConfig,
    net,
    demo_episodes: Sequence[Sequence[StepRecord]] = (),
    out_dir: str | Path | None = None,
    log: Callable[[str], None] | None = None,
) -> TrainResult:
    """epsilon-greedy rollouts + prioritized n-step double-DQN updates."""
    cfg = config.rl
    rng = np.random.default_rng(cfg.seed)
    env = Env(config, mode="train")
    tau, width = env.obs_spec.tau, env.obs_spec.frame_width
    action_class = {a.index: a.verb for a in env.action_table}

    buffer = PrioritizedBuffer(cfg.buffer_capacity, cfg.alpha, cfg.priority_eps, cfg.demo_protect)
    demo_cap = int(cfg.demo_fraction_cap * cfg.buffer_capacity)
    demo_entries: list[ReplayEntry] = []
    for ep in demo_episodes:
        demo_entries.extend(entries_from_episode(ep, tau, width, cfg.n_step, config.gamma, is_demo=True))
    demo_entries = balance_oversample(demo_entries, action_class, cfg.pretrain_oversample, cfg.pretrain_oversample_cap)
    for entry in demo_entries[:demo_cap]:
        buffer.add_demo(entry)

    target = net.clone()
    opt = nm.Adam(net.params, lr=cfg.lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    metrics: list[dict] = []
    global_step = 0
    # the incoming (pre-trained) policy is the baseline the tuning must beat
    best_eval = (
        evaluate_greedy(net, config, cfg.eval_episodes, cfg.eval_seed_base) if cfg.eval_every else -np.inf
    )
    best_state = net.state_dict()
    if log and np.isfinite(best_eval):
        log(f"initial policy eval return {best_eval:.2f}")

    for episode in range(cfg.train_episodes):
        beta = beta_at(episode, cfg)
        result = env.reset(cfg.seed * 1_000_003 + episode)
        assembler = NStepAssembler(cfg.n_step, config.gamma)
        before = SparseWindow.from_window(env.window)
        ep_return, discount = 0.0, 1.0
        ep_losses: list[float] = []
        done = False
        while not done:
            eps = epsilon_at(global_step, cfg)
            if rng.random() < eps:
                action = int(rng.integers(env.n_actions))
            else:
                action = greedy_action(net, env.window.array2d())
            result = env.step(action)
            done = result.done
            after = SparseWindow.from_window(env.window)
            for entry in assembler.push(before, action, result.reward, after, done):
                buffer.add(entry)
            before = after
            ep_return += discount * result.reward
            discount *= config.gamma
            global_step += 1

            if global_step % cfg.update_every == 0 and len(buffer) >= max(cfg.batch_size, cfg.warmup_steps):
                idx, batch, weights = buffer.sample(cfg.batch_size, beta, rng)
                try:
                    td_value, _, priorities = composite_step(
                        batch, weights, net, target, config.gamma, cfg, opt, demo_only_margin=True
                    )
                except TrainingDiverged as exc:
                    if out_path is not None:
                        nm.save_checkpoint(out_path / "diagnostic", net.params)
                    raise TrainingDiverged(f"{exc} at env step {global_step}") from exc
                buffer.update_priorities(idx, priorities)
                ep_losses.append(td_value)

            if global_step % cfg.target_update == 0:
                target.load_state(net.state_dict())

        row = {
            "episode": episode,
            "steps": global_step,
            "td_loss": float(np.mean(ep_losses)) if ep_losses else float("nan"),
            "train_return": ep_return,
            "eval_return": float("nan"),
        }
        if cfg.eval_every and (episode + 1) % cfg.eval_every == 0:
            eval_return = evaluate_greedy(net, config, cfg.eval_episodes, cfg.eval_seed_base)
            row["eval_return"] = eval_return
            if eval_return > best_eval:
                best_eval = eval_return
                best_state = net.state_dict()
            if out_path is not None:
                nm.save_checkpoint(out_path / f"ckpt_ep{episode + 1:05d}", net.params)
        metrics.append(row)
        if log:
            log(f"episode {episode}: {row}")

    final_eval = evaluate_greedy(net, config, cfg.eval_episodes, cfg.eval_seed_base)
    if final_eval > best_eval:
        best_eval = final_eval
        best_state = net.state_dict()

    if out_path is not None:
        nm.save_checkpoint(out_path / "final", net.params)
        saved = net.state_dict()
        net.load_state(best_state)
        nm.save_checkpoint(out_path / "best", net.params)
        net.load_state(saved)
        with open(out_path / "metrics.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["episode", "steps", "td_loss", "train_return", "eval_return"])
            writer.writeheader()
            writer.writerows(metrics)
    return TrainResult(metrics, net.state_dict(), best_state, best_eval, global_step)

"""Prioritized experience replay and n-step transition assembly.

Windows are stored sparsely (set-bit coordinates per window) - a dense
tau x width float window per entry would dwarf the rest of the trainer's
memory.  Priorities live in array-backed sum/min segment trees, giving
O(log n) sampling by prefix mass and a global minimum for the importance
weight normalizer.  Demonstration entries can be protected from eviction:
the agent's ring cursor simply never enters the demo region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SumTree:
    def __init__(self, capacity: int):
        assert capacity > 0 and capacity & (capacity - 1) == 0, "capacity must be a power of two"
        self.capacity = capacity
        self._tree = np.zeros(2 * capacity, dtype=np.float64)

    def __setitem__(self, idx: int, value: float) -> None:
        i = idx + self.capacity
        self._tree[i] = value
        i //= 2
        while i >= 1:
            self._tree[i] = self._tree[2 * i] + self._tree[2 * i + 1]
            i //= 2

    def __getitem__(self, idx: int) -> float:
        return float(self._tree[idx + self.capacity])

    @property
    def total(self) -> float:
        return float(self._tree[1])

    def find_prefix(self, mass: float) -> int:
        """Largest leaf index such that the mass before it is < ``mass``."""
        i = 1
        while i < self.capacity:
            left = 2 * i
            if self._tree[left] >= mass:
                i = left
            else:
                mass -= self._tree[left]
                i = left + 1
        return i - self.capacity


class MinTree:
    def __init__(self, capacity: int):
        assert capacity > 0 and capacity & (capacity - 1) == 0
        self.capacity = capacity
        self._tree = np.full(2 * capacity, np.inf, dtype=np.float64)

    def __setitem__(self, idx: int, value: float) -> None:
        i = idx + self.capacity
        self._tree[i] = value
        i //= 2
        while i >= 1:
            self._tree[i] = min(self._tree[2 * i], self._tree[2 * i + 1])
            i //= 2

    @property
    def minimum(self) -> float:
        return float(self._tree[1])


@dataclass(frozen=True)
class SparseWindow:
    tau: int
    width: int
    frame_ids: np.ndarray  # int32
    bit_ids: np.ndarray  # int32

    @classmethod
    def from_window(cls, window) -> "SparseWindow":
        rows, cols = window.sparse()
        return cls(window.tau, window.width, rows, cols)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.tau, self.width), dtype=np.float32)
        out[self.frame_ids, self.bit_ids] = 1.0
        return out


def densify(windows: list[SparseWindow]) -> np.ndarray:
    out = np.zeros((len(windows), windows[0].tau, windows[0].width), dtype=np.float32)
    for i, w in enumerate(windows):
        out[i, w.frame_ids, w.bit_ids] = 1.0
    return out


@dataclass
class ReplayEntry:
    window: SparseWindow  # observation history at t
    action: int
    reward_n: float  # sum_{k=1..steps} gamma^(k-1) * r_{t+k}
    bootstrap: SparseWindow  # observation history at t+n (unused when done)
    done: bool  # terminal inside the n-step span: no bootstrap
    steps: int  # realized span length (== n except at episode tails)
    is_demo: bool = False


class PrioritizedBuffer:
    """Proportional prioritization: P(i) = p_i^alpha / sum_j p_j^alpha."""

    def __init__(
        self,
        capacity: int,
        alpha: float = 0.6,
        priority_eps: float = 1e-3,
        demo_protect: bool = True,
    ):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.alpha = alpha
        self.priority_eps = priority_eps
        self.demo_protect = demo_protect
        tree_size = 1
        while tree_size < capacity:
            tree_size *= 2
        self._sum = SumTree(tree_size)
        self._min = MinTree(tree_size)
        self._entries: list[ReplayEntry | None] = [None] * capacity
        self._size = 0
        self._n_demo = 0
        self._cursor = 0
        self._max_priority = 1.0

    def __len__(self) -> int:
        return self._size

    @property
    def n_demo(self) -> int:
        return self._n_demo

    def add_demo(self, entry: ReplayEntry) -> None:
        if self._size > self._n_demo:
            raise RuntimeError("demonstrations must be loaded before agent transitions")
        if self._n_demo >= self.capacity:
            raise RuntimeError("demo region exceeds buffer capacity")
        entry.is_demo = True
        self._place(self._n_demo, entry)
        self._n_demo += 1
        self._cursor = self._n_demo
        self._size = self._n_demo

    def add(self, entry: ReplayEntry) -> None:
        floor = self._n_demo if self.demo_protect else 0
        if floor >= self.capacity:
            raise RuntimeError("no agent slots left: demo region fills the buffer")
        pos = self._cursor
        if pos >= self.capacity or pos < floor:
            pos = floor
        self._place(pos, entry)
        self._cursor = pos + 1
        self._size = max(self._size, pos + 1)

    def _place(self, pos: int, entry: ReplayEntry) -> None:
        self._entries[pos] = entry
        p = self._max_priority**self.alpha
        self._sum[pos] = p
        self._min[pos] = p

    def sample(
        self, batch_size: int, beta: float, rng: np.random.Generator
    ) -> tuple[np.ndarray, list[ReplayEntry], np.ndarray]:
        if self._size == 0:
            raise RuntimeError("cannot sample from an empty buffer")
        total = self._sum.total
        idx = np.empty(batch_size, dtype=np.int64)
        for i in range(batch_size):
            mass = rng.random() * total
            j = self._sum.find_prefix(mass)
            idx[i] = min(j, self._size - 1)
        probs = np.array([self._sum[int(j)] for j in idx]) / total
        # weights normalized by the largest weight over the whole buffer,
        # which belongs to the minimum-probability entry
        p_min = self._min.minimum / total
        max_weight = (self._size * p_min) ** (-beta)
        weights = (self._size * probs) ** (-beta) / max_weight
        entries = [self._entries[int(j)] for j in idx]
        return idx, entries, weights.astype(np.float64)

    def update_priorities(self, idx: np.ndarray, priorities: np.ndarray) -> None:
        for j, p in zip(idx, priorities):
            p = max(float(p), self.priority_eps)  # floor; the TD loss already adds its epsilon
            self._max_priority = max(self._max_priority, p)
            self._sum[int(j)] = p**self.alpha
            self._min[int(j)] = p**self.alpha

    def probabilities(self) -> np.ndarray:
        """P(i) over stored entries; handy for sampling-frequency checks."""
        total = self._sum.total
        return np.array([self._sum[i] / total for i in range(self._size)])


class NStepAssembler:
    """Folds a stream of per-step transitions into n-step replay entries."""

    def __init__(self, n: int, gamma: float):
        self.n = n
        self.gamma = gamma
        self._pending: list[list] = []  # [window, action, rewards...]

    def push(self, window: SparseWindow, action: int, reward: float, next_window: SparseWindow, done: bool) -> list[ReplayEntry]:
        out = []
        self._pending.append([window, action, []])
        for slot in self._pending:
            slot[2].append(reward)
        if done:
            for slot in self._pending:
                out.append(self._finish(slot, next_window, True))
            self._pending = []
        elif len(self._pending[0][2]) == self.n:
            out.append(self._finish(self._pending.pop(0), next_window, False))
        return out

    def _finish(self, slot: list, bootstrap: SparseWindow, done: bool) -> ReplayEntry:
        window, action, rewards = slot
        total = 0.0
        for k, r in enumerate(rewards):
            total += (self.gamma**k) * r
        return ReplayEntry(window, action, total, bootstrap, done, len(rewards))

    def reset(self) -> None:
        self._pending = []

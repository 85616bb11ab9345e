"""Evaluation policies: no-op, seeded random, expert and greedy-net wrappers.

The random policy runs on SplitMix64 rather than numpy so that external
drivers (the foreign-language bridge) can generate the exact same action
stream from the same seed.
"""

from __future__ import annotations

import numpy as np

from .observation import ObservationWindow

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Tiny portable PRNG; mirrored bit-for-bit by the bridge client."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def below(self, n: int) -> int:
        return self.next_u64() % n


class NoopPolicy:
    name = "noop"

    def reset(self, seed: int) -> None:
        pass

    def action(self, window: ObservationWindow) -> int:
        return 0


class RandomPolicy:
    name = "random"

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self._rng = SplitMix64(0)

    def reset(self, seed: int) -> None:
        self._rng = SplitMix64(seed)

    def action(self, window: ObservationWindow) -> int:
        return self._rng.below(self.n_actions)


class GreedyNetPolicy:
    """Acts greedily from a Q-network; ties break to the lowest index."""

    name = "net"

    def __init__(self, net):
        self.net = net

    def reset(self, seed: int) -> None:
        pass

    def action(self, window: ObservationWindow) -> int:
        from .qnet import greedy_action

        return greedy_action(self.net, window.array2d())


class EpsilonGreedyPolicy:
    """Training-time exploration wrapper around a Q-network."""

    name = "eps_greedy"

    def __init__(self, net, n_actions: int, rng: np.random.Generator):
        self.net = net
        self.n_actions = n_actions
        self.rng = rng
        self.epsilon = 0.0

    def reset(self, seed: int) -> None:
        pass

    def action(self, window: ObservationWindow) -> int:
        if self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        from .qnet import greedy_action

        return greedy_action(self.net, window.array2d())

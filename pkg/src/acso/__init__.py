"""Seedable APT-vs-defender simulation of an ICS network, plus the deep-RL
defender stack (attention Q-network, n-step double-DQN with prioritized
replay, large-margin pre-training) that learns to run it."""

__version__ = "0.1.0"

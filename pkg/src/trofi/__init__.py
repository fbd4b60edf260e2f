"""Offline RL lab: rank trajectories, learn a reward, train TD3+BC."""

__version__ = "0.1.0"

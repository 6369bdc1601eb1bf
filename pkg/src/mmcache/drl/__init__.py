"""Dueling double deep Q-network built on numpy."""

from .agent import (Agent, DivergenceError, DQNConfig, EpsilonSchedule, epsilon,
                    gradient_check, select_action, sync_target, td_targets, train_step)
from .network import QNetwork
from .replay import Batch, ReplayBuffer

__all__ = [
    "Agent", "Batch", "DivergenceError", "DQNConfig", "EpsilonSchedule", "QNetwork",
    "ReplayBuffer", "epsilon", "gradient_check", "select_action", "sync_target",
    "td_targets", "train_step",
]

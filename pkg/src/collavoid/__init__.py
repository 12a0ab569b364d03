"""Decentralized multi-agent collision avoidance with an LSTM actor-critic."""

from .estimator import LSTMActorCritic, check_observations
from .evaluation import TestSuite, compare, evaluate, generate_suite
from .net import NetConfig, load_checkpoint, save_checkpoint
from .obs import build_observation
from .policy import NetworkPolicy, select_action
from .sim import ScenarioSpec, generate_random_scenario, generate_structured_scenario, run_episode
from .trainer import TrainingConfig, run_training

__version__ = "0.1.0"

__all__ = [
    "LSTMActorCritic", "NetConfig", "NetworkPolicy", "ScenarioSpec", "TestSuite", "TrainingConfig",
    "build_observation", "check_observations", "compare", "evaluate", "generate_random_scenario",
    "generate_structured_scenario", "generate_suite", "load_checkpoint", "run_episode", "run_training",
    "save_checkpoint", "select_action",
]

"""Hand-written policies and the decision interface shared with learned ones."""

import math
from typing import NamedTuple

from .core import MAX_HEADING_CHANGE, Action, PolicyTag, wrap_angle


class Decision(NamedTuple):
    action: Action
    action_index: int = None
    probs: object = None
    value: float = None
    observation: object = None


class Policy:
    """Maps active agents of a world to decisions.

    ``decide`` receives the whole world and the indices of the agents this
    policy controls, so implementations can batch their work.
    """

    def decide(self, world, indices, rng):
        return [Decision(self.act(world, i)) for i in indices]

    def act(self, world, index):
        raise NotImplementedError


def goal_seeking_action(agent, speed=None):
    bearing = math.atan2(agent.goal[1] - agent.position[1], agent.goal[0] - agent.position[0])
    turn = wrap_angle(bearing - agent.heading)
    turn = min(MAX_HEADING_CHANGE, max(-MAX_HEADING_CHANGE, turn))
    return Action(agent.v_pref if speed is None else speed, turn)


class NonCooperativePolicy(Policy):
    """Full speed, turning toward the goal as fast as allowed; ignores others."""

    def act(self, world, index):
        return goal_seeking_action(world[index])


class ZeroVelocityPolicy(Policy):
    def act(self, world, index):
        return Action(0.0, 0.0)


class ScriptedPolicy(Policy):
    """Wraps ``fn(agent, world) -> Action``."""

    def __init__(self, fn):
        self.fn = fn

    def act(self, world, index):
        return self.fn(world[index], world)


class WaitThenGoPolicy(Policy):
    """Stands still for ``wait`` seconds, then behaves non-cooperatively."""

    def __init__(self, wait):
        self.wait = wait

    def act(self, world, index):
        agent = world[index]
        if agent.elapsed < self.wait - 1e-9:
            return Action(0.0, 0.0)
        return goal_seeking_action(agent)


_BASELINES = {
    PolicyTag.NON_COOPERATIVE: NonCooperativePolicy(),
    PolicyTag.ZERO_VELOCITY: ZeroVelocityPolicy(),
}


def baseline_policy(tag, agent, world=()):
    """Action of a built-in baseline for ``agent``."""
    tag = PolicyTag(tag)
    if tag not in _BASELINES:
        raise ValueError(f"{tag.value} is not a baseline policy")
    if tag is PolicyTag.ZERO_VELOCITY:
        return Action(0.0, 0.0)
    return goal_seeking_action(agent)


def baseline_table():
    return dict(_BASELINES)

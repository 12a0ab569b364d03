"""Ego-frame observations of the agent itself and of every other agent."""

import math
from typing import NamedTuple

import numpy as np

from .sim.core import wrap_angle

EGO_DIM = 4
OTHER_DIM = 7
MAX_OTHERS = 19
DEGENERATE_GOAL_DISTANCE = 1e-6


class EgoObservation(NamedTuple):
    goal_distance: float
    v_pref: float
    heading: float
    radius: float


class OtherObservation(NamedTuple):
    px: float
    py: float
    vx: float
    vy: float
    radius: float
    distance: float
    combined_radius: float


class ObservationSequence(NamedTuple):
    ego: EgoObservation
    others: tuple  # OtherObservation, farthest first


def frame_angle(agent):
    """Orientation of the ego frame: x-axis toward the goal."""
    gx = agent.goal[0] - agent.position[0]
    gy = agent.goal[1] - agent.position[1]
    if math.hypot(gx, gy) < DEGENERATE_GOAL_DISTANCE:
        return agent.frame_angle
    return math.atan2(gy, gx)


def ego_observation(agent):
    theta = frame_angle(agent)
    return EgoObservation(agent.goal_distance, agent.v_pref, wrap_angle(agent.heading - theta), agent.radius)


def to_ego_frame(agent, other, theta=None):
    if theta is None:
        theta = frame_angle(agent)
    c, s = math.cos(theta), math.sin(theta)
    dx = other.position[0] - agent.position[0]
    dy = other.position[1] - agent.position[1]
    vx, vy = other.velocity
    return OtherObservation(
        c * dx + s * dy,
        -s * dx + c * dy,
        c * vx + s * vy,
        -s * vx + c * vy,
        other.radius,
        math.hypot(dx, dy),
        other.radius + agent.radius,
    )


def build_observation(world, ego_index, sensing_radius=math.inf, max_others=MAX_OTHERS):
    """Observation for ``world[ego_index]``.

    Other agents must be Active and within ``sensing_radius`` (center distance).
    They are ordered farthest first, ties by ascending agent id, so the closest
    agent is the last one fed to the encoder. Beyond ``max_others`` the
    farthest are dropped.
    """
    agent = world[ego_index]
    theta = frame_angle(agent)
    others = []
    for j, other in enumerate(world):
        if j == ego_index or not other.active:
            continue
        o = to_ego_frame(agent, other, theta)
        if o.distance <= sensing_radius:
            others.append((-o.distance, other.agent_id, o))
    others.sort(key=lambda t: (t[0], t[1]))
    if len(others) > max_others:
        others = others[len(others) - max_others:]
    return ObservationSequence(ego_observation(agent), tuple(t[2] for t in others))


def pack(observations, max_len=None, dtype=np.float64):
    """Stack observations into padded arrays ``(others, mask, ego)``.

    Sequences are left-padded so every row ends on its closest agent; ``mask``
    marks real entries. ``others`` has shape (batch, max_len, 7).
    """
    n = len(observations)
    lengths = [len(o.others) for o in observations]
    t = max(lengths, default=0) if max_len is None else max_len
    if lengths and max(lengths) > t:
        raise ValueError(f"sequence of length {max(lengths)} exceeds max_len={t}")
    others = np.zeros((n, t, OTHER_DIM), dtype=dtype)
    mask = np.zeros((n, t), dtype=bool)
    ego = np.empty((n, EGO_DIM), dtype=dtype)
    for b, o in enumerate(observations):
        ego[b] = o.ego
        k = lengths[b]
        if k:
            others[b, t - k:] = o.others
            mask[b, t - k:] = True
    return others, mask, ego

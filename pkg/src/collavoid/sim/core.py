"""Agent state, action set, reward and the kinematic world step."""

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_DT = 0.2
ARRIVAL_TOLERANCE = 0.1
MAX_HEADING_CHANGE = math.pi / 6


class PolicyTag(str, enum.Enum):
    LEARNED = "Learned"
    NON_COOPERATIVE = "NonCooperative"
    ZERO_VELOCITY = "ZeroVelocity"
    SCRIPTED = "Scripted"


class Status(str, enum.Enum):
    ACTIVE = "Active"
    AT_GOAL = "AtGoal"
    COLLIDED = "Collided"
    TIMED_OUT = "TimedOut"


class SimulationError(ValueError):
    pass


def wrap_angle(a):
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a, 2 * math.pi)
    if a <= -math.pi:
        a += 2 * math.pi
    elif a > math.pi:
        a -= 2 * math.pi
    return a


@dataclass(frozen=True)
class AgentState:
    agent_id: int
    position: tuple
    velocity: tuple
    heading: float
    radius: float
    goal: tuple
    v_pref: float
    policy_tag: PolicyTag = PolicyTag.LEARNED
    status: Status = Status.ACTIVE
    elapsed: float = 0.0
    # ego-frame orientation from the last step with a well-defined goal direction
    frame_angle: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise SimulationError(f"agent {self.agent_id}: radius must be positive")
        if not self.v_pref > 0:
            raise SimulationError(f"agent {self.agent_id}: v_pref must be positive")

    @property
    def active(self):
        return self.status is Status.ACTIVE

    @property
    def speed(self):
        return math.hypot(*self.velocity)

    @property
    def goal_distance(self):
        return math.hypot(self.goal[0] - self.position[0], self.goal[1] - self.position[1])

    @classmethod
    def at_start(cls, agent_id, start, goal, radius, v_pref, policy_tag=PolicyTag.LEARNED,
                 heading=None):
        """Agent at rest, facing its goal unless ``heading`` is given."""
        bearing = math.atan2(goal[1] - start[1], goal[0] - start[0])
        return cls(
            agent_id=agent_id,
            position=(float(start[0]), float(start[1])),
            velocity=(0.0, 0.0),
            heading=bearing if heading is None else wrap_angle(heading),
            radius=float(radius),
            goal=(float(goal[0]), float(goal[1])),
            v_pref=float(v_pref),
            policy_tag=PolicyTag(policy_tag),
            frame_angle=bearing,
        )


@dataclass(frozen=True)
class Action:
    speed: float
    heading_change: float


class ActionSet(tuple):
    """Ordered, index-addressable set of discrete actions for one ``v_pref``."""


def build_action_set(v_pref):
    """Full speed: 6 headings evenly spaced over [-pi/6, pi/6]; half and zero
    speed: headings (-pi/6, 0, pi/6). 12 actions, always in this order."""
    if not v_pref > 0:
        raise SimulationError("v_pref must be positive")
    full = [Action(v_pref, h) for h in np.linspace(-MAX_HEADING_CHANGE, MAX_HEADING_CHANGE, 6)]
    coarse = (-MAX_HEADING_CHANGE, 0.0, MAX_HEADING_CHANGE)
    half = [Action(0.5 * v_pref, h) for h in coarse]
    zero = [Action(0.0, h) for h in coarse]
    return ActionSet(Action(float(a.speed), float(a.heading_change)) for a in full + half + zero)


ACTION_COUNT = len(build_action_set(1.0))


@dataclass(frozen=True)
class RewardParams:
    goal_reward: float = 1.0
    collision_penalty: float = -0.25
    proximity_threshold: float = 0.2
    proximity_offset: float = -0.1
    proximity_slope: float = 0.05

    def __post_init__(self):
        if not self.proximity_threshold > 0:
            raise ValueError("proximity_threshold must be positive")
        if not self.collision_penalty < self.proximity_offset < self.goal_reward:
            raise ValueError("need collision_penalty < proximity_offset < goal_reward")


def surface_distance(a, b):
    """Center distance minus both radii; negative when the disks overlap."""
    return math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1]) - a.radius - b.radius


def min_surface_distance(agent, others):
    d = math.inf
    for o in others:
        if o.agent_id != agent.agent_id:
            d = min(d, surface_distance(agent, o))
    return d


def reward_from_distance(d_min, reached_goal, params=RewardParams()):
    if reached_goal:
        return params.goal_reward
    if d_min < 0:
        return params.collision_penalty
    if 0 < d_min < params.proximity_threshold:
        return params.proximity_offset + params.proximity_slope * d_min
    return 0.0


def reward(agent, others, reached_goal, params=RewardParams()):
    return reward_from_distance(min_surface_distance(agent, others), reached_goal, params)


def arrival_tolerance(speed, dt):
    return max(ARRIVAL_TOLERANCE, speed * dt)


@dataclass
class StepEvents:
    """Per-agent outcome of one world step (keyed by position in the world list)."""

    collided_with: dict = field(default_factory=dict)
    arrived: dict = field(default_factory=dict)
    timed_out: list = field(default_factory=list)
    moved: list = field(default_factory=list)


def apply_action(agent, action, dt):
    heading = wrap_angle(agent.heading + action.heading_change)
    vel = (action.speed * math.cos(heading), action.speed * math.sin(heading))
    pos = (agent.position[0] + dt * vel[0], agent.position[1] + dt * vel[1])
    return replace(agent, position=pos, velocity=vel, heading=heading)


def step(world, actions, dt=DEFAULT_DT, time_limit=math.inf, elapsed=None):
    """Advance every Active agent by one forward-Euler step.

    ``actions`` maps world index to :class:`Action`. Collided and AtGoal agents
    stay frozen and take no part in collision checks. ``elapsed`` overrides the
    clock written into moved agents (avoids drift from repeated addition).
    Returns ``(new_world, events)``.
    """
    if not dt > 0:
        raise SimulationError("dt must be positive")
    new = list(world)
    events = StepEvents()
    for i, agent in enumerate(world):
        if not agent.active:
            continue
        if i not in actions:
            raise SimulationError(f"no action for active agent {agent.agent_id}")
        moved = apply_action(agent, actions[i], dt)
        t = agent.elapsed + dt if elapsed is None else elapsed
        new[i] = replace(moved, elapsed=t)
        events.moved.append(i)

    movers = events.moved
    for a_pos, i in enumerate(movers):
        for j in movers[a_pos + 1:]:
            if surface_distance(new[i], new[j]) < 0:
                events.collided_with.setdefault(i, []).append(j)
                events.collided_with.setdefault(j, []).append(i)

    for i in movers:
        agent = new[i]
        if i in events.collided_with:
            new[i] = replace(agent, status=Status.COLLIDED)
            continue
        if agent.goal_distance <= arrival_tolerance(actions[i].speed, dt):
            new[i] = replace(agent, status=Status.AT_GOAL)
            events.arrived[i] = agent.elapsed
            continue
        if agent.goal_distance >= 1e-6:
            gx, gy = agent.goal[0] - agent.position[0], agent.goal[1] - agent.position[1]
            agent = replace(agent, frame_angle=math.atan2(gy, gx))
        if agent.elapsed > time_limit + 1e-9:
            agent = replace(agent, status=Status.TIMED_OUT)
            events.timed_out.append(i)
        new[i] = agent
    return new, events


def step_rewards(world_after, events, params=RewardParams()):
    """Reward for each agent that moved this step, keyed by world index.

    Closest-agent distance only counts agents that also moved (frozen agents
    are out of the world for collision purposes)."""
    movers = [world_after[i] for i in events.moved]
    return {
        i: reward(world_after[i], movers, i in events.arrived, params)
        for i in events.moved
    }

"""Scenario definitions, generators and the JSON suite format."""

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_DT, AgentState, PolicyTag, SimulationError

SUITE_FORMAT = 1
RADIUS_RANGE = (0.2, 0.8)
V_PREF_RANGE = (0.5, 2.0)
START_MARGIN = 0.2
MIN_GOAL_DISTANCE = 1.0
MAX_ATTEMPTS = 1000


class ScenarioError(SimulationError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    start: tuple
    goal: tuple
    radius: float
    v_pref: float
    policy_tag: PolicyTag = PolicyTag.LEARNED
    heading: float = None


def default_time_limit(agents, floor=30.0, factor=4.0):
    """max(floor, factor x the slowest straight-line time to goal)."""
    straight = max(math.dist(a.start, a.goal) / a.v_pref for a in agents)
    return max(floor, factor * straight)


def domain_for(n):
    """Square domain side for ``n`` random agents.

    4 m up to 8 agents and 6 m up to 10. Larger crowds keep the 10-agent
    density, so the side grows with the square root of ``n``.
    """
    if n <= 8:
        return 4.0
    if n <= 10:
        return 6.0
    return round(6.0 * math.sqrt(n / 10), 2)


@dataclass(frozen=True)
class ScenarioSpec:
    agents: tuple
    domain_size: float
    rng_seed: int = 0
    dt: float = DEFAULT_DT
    time_limit: float = None

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.agents:
            raise ScenarioError("scenario needs at least one agent")
        if self.time_limit is None:
            object.__setattr__(self, "time_limit", default_time_limit(self.agents))

    @property
    def n_agents(self):
        return len(self.agents)

    def validate(self):
        half = self.domain_size / 2 + 1e-9
        for i, a in enumerate(self.agents):
            if abs(a.goal[0]) > half or abs(a.goal[1]) > half:
                raise ScenarioError(f"agent {i}: goal {a.goal} outside the domain")
            for j in range(i):
                b = self.agents[j]
                if math.dist(a.start, b.start) - a.radius - b.radius <= 0:
                    raise ScenarioError(f"agents {j} and {i} overlap at start")
        return self

    def with_tags(self, tag):
        agents = tuple(AgentSpec(a.start, a.goal, a.radius, a.v_pref, PolicyTag(tag), a.heading)
                       for a in self.agents)
        return ScenarioSpec(agents, self.domain_size, self.rng_seed, self.dt, self.time_limit)

    def to_world(self):
        return [AgentState.at_start(i, a.start, a.goal, a.radius, a.v_pref, a.policy_tag, a.heading)
                for i, a in enumerate(self.agents)]

    def to_dict(self):
        return {
            "agents": [
                {
                    "start": list(a.start), "goal": list(a.goal), "radius": a.radius,
                    "v_pref": a.v_pref, "policy_tag": PolicyTag(a.policy_tag).value,
                    **({"heading": a.heading} if a.heading is not None else {}),
                }
                for a in self.agents
            ],
            "domain_size": self.domain_size,
            "rng_seed": self.rng_seed,
            "dt": self.dt,
            "time_limit": self.time_limit,
        }

    @classmethod
    def from_dict(cls, d):
        agents = [AgentSpec(tuple(a["start"]), tuple(a["goal"]), float(a["radius"]), float(a["v_pref"]),
                            PolicyTag(a.get("policy_tag", PolicyTag.LEARNED.value)), a.get("heading"))
                  for a in d["agents"]]
        return cls(agents, float(d["domain_size"]), int(d.get("rng_seed", 0)),
                   float(d.get("dt", DEFAULT_DT)), d.get("time_limit"))


def generate_random_scenario(n, domain_size, rng, policy_tags=None, dt=DEFAULT_DT, seed=None,
                             radius_range=RADIUS_RANGE, v_pref_range=V_PREF_RANGE):
    """Random starts and goals in ``[-L/2, L/2]^2`` with pedestrian-like agents.

    Starts (and, separately, goals) keep a surface gap of at least
    ``START_MARGIN``; each goal is at least ``MIN_GOAL_DISTANCE`` from its own
    start. Each agent gets ``MAX_ATTEMPTS`` tries before the domain is
    declared too crowded.
    """
    if n < 1:
        raise ScenarioError("need at least one agent")
    if isinstance(rng, (int, np.integer)):
        seed = int(rng) if seed is None else seed
        rng = np.random.default_rng(rng)
    if seed is None:
        seed = int(rng.integers(2**31))
    half = domain_size / 2
    tags = [PolicyTag.LEARNED] * n if policy_tags is None else [PolicyTag(t) for t in policy_tags]
    agents = []
    for i in range(n):
        radius = float(rng.uniform(*radius_range))
        v_pref = float(rng.uniform(*v_pref_range))
        for _ in range(MAX_ATTEMPTS):
            start = tuple(float(x) for x in rng.uniform(-half, half, 2))
            goal = tuple(float(x) for x in rng.uniform(-half, half, 2))
            if math.dist(start, goal) < MIN_GOAL_DISTANCE:
                continue
            if all(math.dist(start, a.start) - radius - a.radius >= START_MARGIN
                   and math.dist(goal, a.goal) - radius - a.radius >= START_MARGIN
                   for a in agents):
                break
        else:
            raise ScenarioError(f"could not place {n} agents in a {domain_size} m domain")
        agents.append(AgentSpec(start, goal, radius, v_pref, tags[i]))
    return ScenarioSpec(tuple(agents), float(domain_size), seed, dt)


def generate_structured_scenario(kind, n, radius=0.5, v_pref=1.0, policy_tag=PolicyTag.LEARNED,
                                 dt=DEFAULT_DT):
    """``circle``: agents evenly spaced on a circle, goals antipodal.
    ``pair_swaps``: n/2 horizontal lanes, each with two agents swapping ends."""
    tag = PolicyTag(policy_tag)
    if kind == "circle":
        if n < 2:
            raise ScenarioError("circle needs at least 2 agents")
        spacing = 2 * radius + START_MARGIN + 0.2
        r_circle = max(4.0, spacing / (2 * math.sin(math.pi / n)))
        agents = []
        for k in range(n):
            a = 2 * math.pi * k / n
            start = (r_circle * math.cos(a), r_circle * math.sin(a))
            agents.append(AgentSpec(start, (-start[0], -start[1]), radius, v_pref, tag))
        domain = 2 * (r_circle + radius)
    elif kind == "pair_swaps":
        if n < 2 or n % 2:
            raise ScenarioError("pair_swaps needs an even number of agents")
        lanes = n // 2
        gap = 2 * radius + 0.5
        half = 3.0
        agents = []
        for k in range(lanes):
            y = (k - (lanes - 1) / 2) * gap
            agents.append(AgentSpec((-half, y), (half, y), radius, v_pref, tag))
            agents.append(AgentSpec((half, y), (-half, y), radius, v_pref, tag))
        domain = 2 * max(half + radius, lanes * gap / 2 + radius)
    else:
        raise ScenarioError(f"unknown scenario kind {kind!r}")
    return ScenarioSpec(tuple(agents), domain, 0, dt).validate()


def write_suite(path, scenarios, suite_id="suite", seed=None):
    doc = {
        "format": SUITE_FORMAT,
        "suite_id": suite_id,
        "seed": seed,
        "scenarios": [s.to_dict() for s in scenarios],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def read_suite(path):
    """Returns ``(suite_id, seed, scenarios)``."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != SUITE_FORMAT:
        raise ScenarioError(f"{path}: unsupported suite format {doc.get('format')!r}")
    return doc.get("suite_id", "suite"), doc.get("seed"), [ScenarioSpec.from_dict(d) for d in doc["scenarios"]]

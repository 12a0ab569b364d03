"""Episode rollout loop and the episode log formats (JSON, flat CSV)."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .core import PolicyTag, RewardParams, Status, step, step_rewards
from .policies import baseline_table


@dataclass
class Outcome:
    status: Status
    t_goal: float = None


@dataclass
class EpisodeLog:
    scenario: object
    snapshots: list
    outcomes: dict
    cumulative_rewards: dict
    step_rewards: list = field(default_factory=list)
    policy_probs: list = None
    episode_id: int = 0

    @property
    def dt(self):
        return self.scenario.dt

    def final_world(self):
        return self.snapshots[-1]

    def to_dict(self):
        doc = {
            "episode_id": self.episode_id,
            "dt": self.dt,
            "n_agents": self.scenario.n_agents,
            "n_steps": len(self.snapshots) - 1,
            "scenario": self.scenario.to_dict(),
            "outcomes": {
                str(i): {"status": o.status.value, "t_goal": o.t_goal} for i, o in self.outcomes.items()
            },
            "cumulative_rewards": {str(i): r for i, r in self.cumulative_rewards.items()},
            "steps": [
                {
                    "t": k * self.dt,
                    "agents": [
                        {"id": a.agent_id, "px": a.position[0], "py": a.position[1],
                         "vx": a.velocity[0], "vy": a.velocity[1], "psi": a.heading,
                         "status": a.status.value}
                        for a in snap
                    ],
                    **({"rewards": {str(i): r for i, r in self.step_rewards[k - 1].items()}} if k else {}),
                    **({"policy": {str(i): list(map(float, p)) for i, p in self.policy_probs[k - 1].items()}}
                       if k and self.policy_probs is not None else {}),
                }
                for k, snap in enumerate(self.snapshots)
            ],
        }
        return doc

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    def csv_rows(self):
        for k, snap in enumerate(self.snapshots):
            for a in snap:
                yield (self.episode_id, k * self.dt, a.agent_id, a.position[0], a.position[1],
                       a.velocity[0], a.velocity[1], a.heading, a.status.value)

    def write_csv(self, path, append=False):
        with open(path, "a" if append else "w", newline="") as fh:
            w = csv.writer(fh)
            if not append:
                w.writerow(CSV_COLUMNS)
            w.writerows(self.csv_rows())


CSV_COLUMNS = ("episode_id", "t", "agent_id", "px", "py", "vx", "vy", "psi", "status")


def run_episode(scenario, policies=None, reward_params=RewardParams(), record_probs=False,
                observer=None, episode_id=0, rng=None):
    """Roll ``scenario`` forward until every agent is done.

    ``policies`` maps :class:`PolicyTag` to a policy object; the baselines are
    filled in when absent. ``observer(k, world_before, decisions, world_after,
    events, rewards)`` is called after each step ``k`` (1-based). Sampling
    policies draw from ``rng``, seeded from the scenario by default.
    """
    table = baseline_table()
    table.update(policies or {})
    rng = np.random.default_rng(scenario.rng_seed) if rng is None else rng
    world = scenario.to_world()
    for a in world:
        if a.policy_tag not in table:
            raise KeyError(f"no policy for tag {a.policy_tag.value}")
    snapshots = [tuple(world)]
    cumulative = {i: 0.0 for i in range(len(world))}
    outcomes = {}
    rewards_log = []
    probs_log = [] if record_probs else None
    k = 0
    while any(a.active for a in world):
        k += 1
        decisions = {}
        for tag in PolicyTag:
            idx = [i for i, a in enumerate(world) if a.active and a.policy_tag is tag]
            if idx:
                decisions.update(zip(idx, table[tag].decide(world, idx, rng)))
        actions = {i: d.action for i, d in decisions.items()}
        before = world
        world, events = step(world, actions, scenario.dt, scenario.time_limit, elapsed=k * scenario.dt)
        rewards = step_rewards(world, events, reward_params)
        for i, r in rewards.items():
            cumulative[i] += r
        for i, t in events.arrived.items():
            outcomes[i] = Outcome(Status.AT_GOAL, t)
        for i in events.collided_with:
            outcomes[i] = Outcome(Status.COLLIDED)
        for i in events.timed_out:
            outcomes[i] = Outcome(Status.TIMED_OUT)
        snapshots.append(tuple(world))
        rewards_log.append(rewards)
        if record_probs:
            probs_log.append({i: d.probs for i, d in decisions.items() if d.probs is not None})
        if observer is not None:
            observer(k, before, decisions, world, events, rewards)
    return EpisodeLog(scenario, snapshots, outcomes, cumulative, rewards_log, probs_log, episode_id)

"""Scripted-expert dataset and the supervised initialization phase."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .. import net
from ..obs import MAX_OTHERS, build_observation, pack
from ..policy import GREEDY, NetworkPolicy
from ..sim import (
    AgentSpec, PolicyTag, ScenarioSpec, RewardParams, Status, arrival_tolerance, build_action_set,
    generate_random_scenario, run_episode,
)
from ..sim.policies import Decision, Policy
from .losses import supervised_loss_and_grads

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SupervisedExample:
    observation: object
    target_action: int
    target_value: float


class ExpertPolicy(Policy):
    """Greedy goal progress with a one-step collision veto.

    Every discrete action is scored by the distance to goal it leaves (an
    action that triggers arrival wins outright). Actions whose next position
    comes within ``veto_margin`` surface distance of another active agent,
    extrapolated at constant velocity for ``horizon`` steps, are excluded. If
    everything is vetoed the action keeping the largest clearance is taken.
    Ties go to the lowest action index.
    """

    def __init__(self, dt, veto_margin=0.3, horizon=1):
        self.dt = dt
        self.veto_margin = veto_margin
        self.horizon = horizon

    def choose(self, world, index):
        agent = world[index]
        actions = build_action_set(agent.v_pref)
        others = [o for j, o in enumerate(world) if j != index and o.active]
        px, py = agent.position
        gx, gy = agent.goal
        best, best_key = 0, None
        for a_idx, a in enumerate(actions):
            heading = agent.heading + a.heading_change
            vx, vy = a.speed * math.cos(heading), a.speed * math.sin(heading)
            nx, ny = px + self.dt * vx, py + self.dt * vy
            d_goal = math.hypot(gx - nx, gy - ny)
            arrives = d_goal <= arrival_tolerance(a.speed, self.dt)
            clearance = math.inf
            for o in others:
                for s in range(1, self.horizon + 1):
                    t = s * self.dt
                    d = math.hypot(px + t * vx - o.position[0] - t * o.velocity[0],
                                   py + t * vy - o.position[1] - t * o.velocity[1])
                    clearance = min(clearance, d - agent.radius - o.radius)
            allowed = clearance >= self.veto_margin
            key = (allowed, allowed and arrives, round(-d_goal, 9) if allowed else clearance)
            if best_key is None or key > best_key:
                best, best_key = a_idx, key
        return best

    def decide(self, world, indices, rng):
        out = []
        for i in indices:
            a = self.choose(world, i)
            out.append(Decision(build_action_set(world[i].v_pref)[a], a))
        return out


def expert_value(t_remaining, v_pref, gamma):
    return gamma ** (t_remaining * v_pref)


def generate_supervised_dataset(n_examples, rng, n_agents=(1, 2), domain_size=4.0, dt=0.2,
                                gamma=0.97, veto_margin=0.3, horizon=1, random_heading=0.5,
                                reward_params=RewardParams()):
    """Roll out the expert in 1-2 agent scenarios and record every decision.

    Value targets are ``gamma ** (t_remaining * v_pref)`` for agents that
    reach their goal, the collision penalty for agents that collide and 0 for
    agents that time out.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    expert = ExpertPolicy(dt, veto_margin, horizon)
    examples = []
    while len(examples) < n_examples:
        n = int(rng.integers(n_agents[0], n_agents[1] + 1))
        scenario = generate_random_scenario(n, domain_size, rng, [PolicyTag.SCRIPTED] * n, dt)
        if rng.random() < random_heading:
            agents = [AgentSpec(a.start, a.goal, a.radius, a.v_pref, a.policy_tag,
                                float(rng.uniform(-math.pi, math.pi))) for a in scenario.agents]
            scenario = ScenarioSpec(agents, scenario.domain_size, scenario.rng_seed, dt, scenario.time_limit)
        records = {i: [] for i in range(n)}

        def observer(k, before, decisions, after, events, rewards):
            for i, d in decisions.items():
                records[i].append((k * dt - dt, build_observation(before, i), d.action_index))

        ep = run_episode(scenario, {PolicyTag.SCRIPTED: expert}, reward_params, observer=observer)
        for i, rec in records.items():
            outcome = ep.outcomes[i]
            for t, obs, a in rec:
                if outcome.status is Status.AT_GOAL:
                    v = expert_value(outcome.t_goal - t, scenario.agents[i].v_pref, gamma)
                elif outcome.status is Status.COLLIDED:
                    v = reward_params.collision_penalty
                else:
                    v = 0.0
                examples.append(SupervisedExample(obs, a, v))
    return examples[:n_examples]


def dataset_arrays(dataset, max_len=MAX_OTHERS, dtype=np.float32):
    others, mask, ego = pack([e.observation for e in dataset], max_len, dtype)
    actions = np.array([e.target_action for e in dataset], dtype=np.int64)
    values = np.array([e.target_value for e in dataset], dtype=np.float64)
    return others, mask, ego, actions, values


def supervised_init(dataset, params, epochs=20, lr=1e-3, batch_size=256, seed=0, adam=None,
                    callback=None):
    """Fit policy (cross-entropy) and value (squared error) to expert targets.

    ``dataset`` is a list of :class:`SupervisedExample` or the tuple returned
    by :func:`dataset_arrays`. Returns ``(params, adam_state, epoch_losses)``
    where each loss entry is ``(epoch, value_loss, cross_entropy)``.
    """
    if isinstance(dataset, tuple):
        others, mask, ego, actions, values = dataset
    else:
        if not dataset:
            raise ValueError("empty supervised dataset")
        others, mask, ego, actions, values = dataset_arrays(dataset, dtype=params["fc1_W"].dtype)
    n = len(actions)
    if n == 0:
        raise ValueError("empty supervised dataset")
    # trim padding columns nobody uses
    used = mask.any(axis=0)
    if used.any():
        first = int(np.argmax(used))
        others, mask = others[:, first:], mask[:, first:]
    else:
        others, mask = others[:, :0], mask[:, :0]
    rng = np.random.default_rng(seed)
    adam = net.AdamState.zeros(params) if adam is None else adam
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        v_sum = ce_sum = 0.0
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            vl, ce, grads = supervised_loss_and_grads(
                others[idx], mask[idx], ego[idx], actions[idx], values[idx], params)
            params, adam = net.adam_update(params, grads, adam, lr)
            v_sum += vl * len(idx)
            ce_sum += ce * len(idx)
        history.append((epoch + 1, v_sum / n, ce_sum / n))
        log.info("supervised epoch %d: value %.4f  cross-entropy %.4f", *history[-1])
        if callback is not None:
            callback(*history[-1])
    return params, adam, history


def single_agent_success(params, n_scenarios=100, seed=0, domain_size=4.0, dt=0.2):
    """Fraction of random one-agent scenarios the greedy network policy finishes."""
    policy = NetworkPolicy.from_params(params, GREEDY)
    rng = np.random.default_rng(seed)
    wins = 0
    for _ in range(n_scenarios):
        scenario = generate_random_scenario(1, domain_size, rng, dt=dt)
        ep = run_episode(scenario, {PolicyTag.LEARNED: policy})
        wins += ep.outcomes[0].status is Status.AT_GOAL
    return wins / n_scenarios

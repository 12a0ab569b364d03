"""Network-driven policy: observation -> action distribution -> discrete action."""

import math

import numpy as np

from . import net
from .obs import MAX_OTHERS, build_observation
from .sim.core import build_action_set
from .sim.policies import Decision, Policy

GREEDY = "greedy"
SAMPLE = "sample"


def select_action(probs, mode=GREEDY, rng=None, atol=1e-5):
    """Greedy: first index of the maximum. Sample: inverse-CDF draw from ``rng``."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1.0) > atol:
        raise ValueError("action distribution must be a normalized probability vector")
    if mode == GREEDY:
        return int(np.argmax(p))
    if mode == SAMPLE:
        if rng is None:
            raise ValueError("sampling needs an rng")
        cdf = np.cumsum(p)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return min(idx, len(p) - 1)
    raise ValueError(f"unknown action selection mode {mode!r}")


class ParamsPredictor:
    """Direct forward pass on a fixed parameter snapshot (picklable)."""

    def __init__(self, params, max_len=None):
        self.params = params
        self.max_len = max_len

    def __call__(self, observations):
        probs, values, _ = net.forward(observations, self.params, self.max_len)
        return probs, values


params_predictor = ParamsPredictor


class NetworkPolicy(Policy):
    """Batches all agents it controls into one network query per step.

    ``predict(observations) -> (probs, values)`` is either a direct forward
    pass (see :func:`params_predictor`) or a handle on a prediction service.
    """

    def __init__(self, predict, mode=GREEDY, sensing_radius=math.inf, max_others=MAX_OTHERS):
        self.predict = predict
        self.mode = mode
        self.sensing_radius = sensing_radius
        self.max_others = max_others
        self._action_sets = {}

    @classmethod
    def from_params(cls, params, mode=GREEDY, **kwargs):
        return cls(params_predictor(params), mode, **kwargs)

    def action_set(self, v_pref):
        if v_pref not in self._action_sets:
            self._action_sets[v_pref] = build_action_set(v_pref)
        return self._action_sets[v_pref]

    def observe(self, world, indices):
        return [build_observation(world, i, self.sensing_radius, self.max_others) for i in indices]

    def decide(self, world, indices, rng):
        observations = self.observe(world, indices)
        probs, values = self.predict(observations)
        decisions = []
        for row, i in enumerate(indices):
            a = select_action(probs[row], self.mode, rng)
            decisions.append(Decision(self.action_set(world[i].v_pref)[a], a, probs[row],
                                      float(values[row]), observations[row]))
        return decisions

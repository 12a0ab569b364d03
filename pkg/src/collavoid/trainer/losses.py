"""Experiences, k-step returns and the actor-critic objective."""

import math
from dataclasses import dataclass

import numpy as np

from .. import net
from ..obs import pack


@dataclass(frozen=True)
class Experience:
    observation: object
    action_index: int
    reward: float
    terminal: bool = False
    episode_id: int = 0
    agent_id: int = 0
    step_index: int = 0
    value: float = None  # value estimate at acting time


@dataclass(frozen=True)
class ReturnTarget:
    observation: object
    action_index: int
    ret: float
    advantage: float


def discounted_returns(trajectory, bootstrap_value, gamma, k_horizon=None):
    """k-step discounted returns for one agent's time-ordered trajectory.

    A trajectory ending in a terminal step bootstraps from 0. Otherwise the
    tail bootstraps from ``bootstrap_value``. With ``k_horizon`` the
    trajectory is cut into windows of that many steps and every window but
    the last bootstraps from the acting-time value of the step following it.
    Within a window ``R_t = r_t + gamma * R_{t+1}``.
    """
    if not trajectory:
        raise ValueError("empty trajectory")
    n = len(trajectory)
    k = n if not k_horizon else int(k_horizon)
    tail = 0.0 if trajectory[-1].terminal else float(bootstrap_value)
    out = [None] * n
    for start in range(0, n, k):
        end = min(start + k, n)
        if end < n:
            nxt = trajectory[end].value
            if nxt is None:
                raise ValueError("window bootstrap needs the acting-time value of the next step")
            R = float(nxt)
        else:
            R = tail
        for t in range(end - 1, start - 1, -1):
            e = trajectory[t]
            R = e.reward + gamma * R
            v = math.nan if e.value is None else e.value
            out[t] = ReturnTarget(e.observation, e.action_index, R, R - v)
    return out


def effective_gamma(gamma, mode="per_step", dt=None, v_pref=None):
    """Per-step discount; ``vpref_scaled`` uses gamma ** (dt * v_pref)."""
    if mode == "per_step":
        return gamma
    if mode == "vpref_scaled":
        return gamma ** (dt * v_pref)
    raise ValueError(f"unknown discount mode {mode!r}")


def _entropy(probs, log_probs):
    return -(probs * log_probs).sum(axis=1)


@dataclass
class LossStats:
    value_loss: float
    policy_objective: float
    entropy: float
    grad_norm: float = 0.0


def a3c_loss_and_grads(batch, params, beta=1e-4, max_len=None):
    """Value loss, policy objective and the gradient of ``f_v - f_pi``.

    ``f_v = mean (R - V)^2`` and ``f_pi = mean [log pi(a|s) * (R - V) + beta * H]``
    with the advantage held constant. Descending the returned gradients
    lowers the value loss and raises the policy objective.
    """
    if not batch:
        raise ValueError("empty batch")
    others, mask, ego = pack([b.observation for b in batch], max_len, dtype=params["fc1_W"].dtype)
    probs, values, trace = net.forward_arrays(others, mask, ego, params)
    n = len(batch)
    returns = np.array([b.ret for b in batch], dtype=np.float64)
    actions = np.array([b.action_index for b in batch])
    p = probs.astype(np.float64)
    logp = trace.log_probs.astype(np.float64)
    v = values.astype(np.float64)
    adv = returns - v
    entropy = _entropy(p, logp)
    f_v = float(np.mean(adv ** 2))
    f_pi = float(np.mean(logp[np.arange(n), actions] * adv + beta * entropy))
    if not (math.isfinite(f_v) and math.isfinite(f_pi)):
        raise net.DivergenceError("non-finite actor-critic loss")

    onehot = np.zeros_like(p)
    onehot[np.arange(n), actions] = 1.0
    d_pi_d_logits = adv[:, None] * (onehot - p) - beta * p * (logp + entropy[:, None])
    dlogits = -d_pi_d_logits / n
    dvalues = -2.0 * adv / n
    grads = net.backward(trace, dlogits, dvalues, params)
    return f_v, f_pi, grads, LossStats(f_v, f_pi, float(entropy.mean()))


def supervised_loss_and_grads(others, mask, ego, target_actions, target_values, params):
    """Mean squared value error plus mean policy cross-entropy, and gradients."""
    probs, values, trace = net.forward_arrays(others, mask, ego, params)
    n = len(target_actions)
    idx = np.arange(n)
    logp = trace.log_probs.astype(np.float64)
    err = values.astype(np.float64) - target_values
    value_loss = float(np.mean(err ** 2))
    ce = float(-np.mean(logp[idx, target_actions]))
    if not (math.isfinite(value_loss) and math.isfinite(ce)):
        raise net.DivergenceError("non-finite supervised loss")
    dlogits = probs.astype(np.float64)
    dlogits[idx, target_actions] -= 1.0
    grads = net.backward(trace, dlogits / n, 2.0 * err / n, params)
    return value_loss, ce, grads

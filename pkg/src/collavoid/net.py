"""LSTM-encoded actor-critic network with hand-written backpropagation.

The LSTM runs over the other-agent sequence of a single decision (not over
time). Its final hidden state is concatenated with the ego vector, fed
through two ReLU layers, and split into softmax policy logits and a scalar
value. Batches use left-padded sequences with a mask: padded steps leave the
zero initial state untouched, so a padded row computes exactly what the
unpadded sequence would.
"""

import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .obs import EGO_DIM, MAX_OTHERS, OTHER_DIM, pack
from .sim.core import ACTION_COUNT

log = logging.getLogger(__name__)

PARAM_ORDER = ("lstm_W", "lstm_b", "fc1_W", "fc1_b", "fc2_W", "fc2_b", "pi_W", "pi_b", "v_W", "v_b")

CHECKPOINT_MAGIC = b"CAVDCKPT"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<8sI7IQIQB")


class DivergenceError(FloatingPointError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class NetConfig:
    other_obs_dim: int = OTHER_DIM
    ego_dim: int = EGO_DIM
    lstm_hidden: int = 64
    fc_widths: tuple = (256, 256)
    action_count: int = ACTION_COUNT
    max_sequence: int = MAX_OTHERS
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "fc_widths", tuple(int(w) for w in self.fc_widths))
        ints = (self.other_obs_dim, self.ego_dim, self.lstm_hidden, *self.fc_widths,
                self.action_count, self.max_sequence)
        if len(self.fc_widths) != 2 or any(int(v) <= 0 for v in ints):
            raise ValueError(f"invalid network configuration: {self}")

    def shapes(self):
        h, d = self.lstm_hidden, self.other_obs_dim
        f1, f2 = self.fc_widths
        return {
            "lstm_W": (4 * h, h + d),
            "lstm_b": (4 * h,),
            "fc1_W": (f1, h + self.ego_dim),
            "fc1_b": (f1,),
            "fc2_W": (f2, f1),
            "fc2_b": (f2,),
            "pi_W": (self.action_count, f2),
            "pi_b": (self.action_count,),
            "v_W": (1, f2),
            "v_b": (1,),
        }

    def n_params(self):
        return sum(int(np.prod(s)) for s in self.shapes().values())


def init_params(config, seed=0):
    """Glorot-uniform matrices, zero biases, forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    dtype = np.dtype(config.dtype)
    params = {}
    for name, shape in config.shapes().items():
        if len(shape) == 2:
            fan_out, fan_in = shape
            if name == "lstm_W":
                fan_out //= 4
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    h = config.lstm_hidden
    params["lstm_b"][h:2 * h] = 1.0
    return params


def zeros_like(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check_params(params, config=None):
    missing = [k for k in PARAM_ORDER if k not in params]
    if missing:
        raise ValueError(f"missing parameters: {missing}")
    if config is not None:
        for k, s in config.shapes().items():
            if params[k].shape != s:
                raise ValueError(f"{k} has shape {params[k].shape}, expected {s}")


@dataclass
class ForwardTrace:
    hx: list = field(default_factory=list)
    gates: list = field(default_factory=list)
    c_prev: list = field(default_factory=list)
    tanh_c: list = field(default_factory=list)
    mask: list = field(default_factory=list)
    h_n: np.ndarray = None
    encoded: np.ndarray = None
    a1: np.ndarray = None
    z1: np.ndarray = None
    a2: np.ndarray = None
    z2: np.ndarray = None
    logits: np.ndarray = None
    probs: np.ndarray = None
    log_probs: np.ndarray = None
    values: np.ndarray = None
    shapes: dict = None


def lstm_encode(others, mask, params, trace=None):
    """Run the LSTM over (batch, T, 7) inputs; returns h_n of shape (batch, H).

    Rows whose mask is all False (no other agents) return the zero vector.
    """
    W, b = params["lstm_W"], params["lstm_b"]
    hdim = b.shape[0] // 4
    bsz, steps = mask.shape
    h = np.zeros((bsz, hdim), dtype=W.dtype)
    c = np.zeros((bsz, hdim), dtype=W.dtype)
    for t in range(steps):
        m = mask[:, t]
        if not m.any():
            continue
        hx = np.concatenate([h, others[:, t].astype(W.dtype, copy=False)], axis=1)
        z = hx @ W.T + b
        i = _sigmoid(z[:, :hdim])
        f = _sigmoid(z[:, hdim:2 * hdim])
        o = _sigmoid(z[:, 2 * hdim:3 * hdim])
        g = np.tanh(z[:, 3 * hdim:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        mm = m[:, None]
        if trace is not None:
            trace.hx.append((t, hx))
            trace.gates.append((i, f, o, g))
            trace.c_prev.append(c)
            trace.tanh_c.append(tc)
            trace.mask.append(mm)
        c = np.where(mm, c_new, c)
        h = np.where(mm, h_new, h)
    return h


def forward_arrays(others, mask, ego, params):
    """Batched forward pass. Returns ``(probs, values, trace)``."""
    _check_params(params)
    trace = ForwardTrace()
    dtype = params["fc1_W"].dtype
    h_n = lstm_encode(others, mask, params, trace)
    s_e = np.concatenate([h_n, ego.astype(dtype, copy=False)], axis=1)
    a1 = s_e @ params["fc1_W"].T + params["fc1_b"]
    z1 = np.maximum(a1, 0)
    a2 = z1 @ params["fc2_W"].T + params["fc2_b"]
    z2 = np.maximum(a2, 0)
    logits = z2 @ params["pi_W"].T + params["pi_b"]
    values = (z2 @ params["v_W"].T + params["v_b"])[:, 0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    total = expd.sum(axis=1, keepdims=True)
    probs = expd / total
    log_probs = shifted - np.log(total)
    if not (np.isfinite(logits).all() and np.isfinite(values).all()):
        raise DivergenceError("non-finite network output")
    trace.h_n, trace.encoded, trace.a1, trace.z1, trace.a2, trace.z2 = h_n, s_e, a1, z1, a2, z2
    trace.logits, trace.probs, trace.log_probs, trace.values = logits, probs, log_probs, values
    trace.shapes = {k: params[k].shape for k in PARAM_ORDER}
    return probs, values, trace


def forward(observations, params, max_len=None):
    """Forward pass over a list of :class:`ObservationSequence`."""
    others, mask, ego = pack(observations, max_len, dtype=params["fc1_W"].dtype)
    return forward_arrays(others, mask, ego, params)


def backward(trace, dlogits, dvalues, params):
    """Gradients of ``sum(dlogits * logits) + sum(dvalues * values)``.

    ``dlogits`` has shape (batch, actions) and ``dvalues`` shape (batch,).
    """
    if trace.shapes != {k: params[k].shape for k in PARAM_ORDER}:
        raise ValueError("trace was produced with differently shaped parameters")
    dtype = params["fc1_W"].dtype
    dlogits = np.asarray(dlogits, dtype=dtype)
    dvalues = np.asarray(dvalues, dtype=dtype).reshape(-1, 1)
    g = {}
    g["pi_W"] = dlogits.T @ trace.z2
    g["pi_b"] = dlogits.sum(axis=0)
    g["v_W"] = dvalues.T @ trace.z2
    g["v_b"] = dvalues.sum(axis=0)
    dz2 = dlogits @ params["pi_W"] + dvalues @ params["v_W"]
    da2 = dz2 * (trace.a2 > 0)
    g["fc2_W"] = da2.T @ trace.z1
    g["fc2_b"] = da2.sum(axis=0)
    da1 = (da2 @ params["fc2_W"]) * (trace.a1 > 0)
    g["fc1_W"] = da1.T @ trace.encoded
    g["fc1_b"] = da1.sum(axis=0)
    ds_e = da1 @ params["fc1_W"]

    W = params["lstm_W"]
    hdim = params["lstm_b"].shape[0] // 4
    dW = np.zeros_like(W)
    db = np.zeros_like(params["lstm_b"])
    dh = ds_e[:, :hdim]
    dc = np.zeros_like(dh)
    for k in range(len(trace.hx) - 1, -1, -1):
        _, hx = trace.hx[k]
        i, f, o, gg = trace.gates[k]
        tc = trace.tanh_c[k]
        m = trace.mask[k]
        dh_new = np.where(m, dh, 0)
        dc_new = np.where(m, dc, 0) + dh_new * o * (1 - tc * tc)
        dz = np.concatenate([
            dc_new * gg * i * (1 - i),
            dc_new * trace.c_prev[k] * f * (1 - f),
            dh_new * tc * o * (1 - o),
            dc_new * i * (1 - gg * gg),
        ], axis=1)
        dW += dz.T @ hx
        db += dz.sum(axis=0)
        dhx = dz @ W
        dh = dhx[:, :hdim] + np.where(m, 0, dh)
        dc = dc_new * f + np.where(m, 0, dc)
    g["lstm_W"] = dW
    g["lstm_b"] = db
    return {k: g[k].reshape(params[k].shape).astype(dtype, copy=False) for k in PARAM_ORDER}


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_by_global_norm(grads, max_norm):
    norm = global_norm(grads)
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        return {k: g * g.dtype.type(scale) for k, g in grads.items()}, norm
    return grads, norm


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    skipped: int = 0

    @classmethod
    def zeros(cls, params):
        return cls(zeros_like(params), zeros_like(params))


def adam_update(params, grads, state, lr=2e-5, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam descent step.

    Returns new ``(params, state)``; inputs are not modified. Non-finite
    gradients skip the update and bump ``state.skipped``.
    """
    if any(not np.isfinite(g).all() for g in grads.values()):
        log.warning("non-finite gradient; Adam update skipped")
        return params, AdamState(state.m, state.v, state.step, state.skipped + 1)
    t = state.step + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient {k} has shape {g.shape}, expected {p.shape}")
        m = beta1 * state.m[k] + (1 - beta1) * g
        v = beta2 * state.v[k] + (1 - beta2) * (g * g)
        update = (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
        new_p[k] = (p - update).astype(p.dtype, copy=False)
        new_m[k] = m.astype(p.dtype, copy=False)
        new_v[k] = v.astype(p.dtype, copy=False)
    return new_p, AdamState(new_m, new_v, t, state.skipped)


@dataclass
class Checkpoint:
    params: dict
    config: NetConfig
    adam: AdamState = None
    episodes: int = 0
    phase: int = 1


def save_checkpoint(path, params, config, adam=None, episodes=0, phase=1):
    """Write params (and Adam moments) as little-endian float32 tensors.

    Layout: fixed header, then each tensor of ``PARAM_ORDER`` flattened in C
    order, then the same for the first and second Adam moments when present.
    The file is written to a temporary name and renamed into place.
    """
    _check_params(params, config)
    has_moments = adam is not None
    header = _HEADER.pack(
        CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
        config.other_obs_dim, config.ego_dim, config.lstm_hidden, *config.fc_widths,
        config.action_count, config.max_sequence,
        int(episodes), int(phase), adam.step if has_moments else 0, int(has_moments),
    )
    chunks = [header]
    groups = [params] + ([adam.m, adam.v] if has_moments else [])
    for group in groups:
        for k in PARAM_ORDER:
            chunks.append(np.ascontiguousarray(group[k], dtype="<f4").tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


def load_checkpoint(path, expected_action_count=None, dtype="float32"):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    fields = _HEADER.unpack_from(data)
    magic, version = fields[0], fields[1]
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {CHECKPOINT_VERSION}")
    obs_dim, ego_dim, hidden, f1, f2, n_actions, max_seq = fields[2:9]
    episodes, phase, adam_step, has_moments = fields[9:13]
    config = NetConfig(obs_dim, ego_dim, hidden, (f1, f2), n_actions, max_seq, dtype)
    if expected_action_count is not None and n_actions != expected_action_count:
        raise CheckpointError(
            f"{path}: checkpoint has {n_actions} actions, action set has {expected_action_count}")
    shapes = config.shapes()
    n_floats = config.n_params() * (3 if has_moments else 1)
    expected = _HEADER.size + 4 * n_floats
    if len(data) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    groups, pos = [], 0
    for _ in range(3 if has_moments else 1):
        group = {}
        for k in PARAM_ORDER:
            n = int(np.prod(shapes[k]))
            group[k] = flat[pos:pos + n].reshape(shapes[k]).astype(dtype)
            pos += n
        groups.append(group)
    adam = AdamState(groups[1], groups[2], adam_step) if has_moments else None
    return Checkpoint(groups[0], config, adam, episodes, phase)

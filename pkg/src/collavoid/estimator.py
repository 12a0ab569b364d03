"""scikit-learn style wrapper around the policy/value network.

``fit`` is the supervised initialization (behaviour cloning of action
indices plus value regression); ``predict`` / ``predict_proba`` /
``predict_value`` query the trained network. Reinforcement learning on top
of a fitted estimator goes through :meth:`LSTMActorCritic.fit_rl`.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import net
from .obs import EGO_DIM, MAX_OTHERS, OTHER_DIM, ObservationSequence, pack
from .policy import GREEDY, NetworkPolicy
from .sim.core import ACTION_COUNT
from .trainer.pipeline import TrainingConfig, run_training
from .trainer.supervised import supervised_init


def check_observations(X, max_sequence=MAX_OTHERS, dtype=np.float32):
    """Validate observations and return padded ``(others, mask, ego)`` arrays.

    Accepts a sequence of :class:`ObservationSequence` or an already packed
    ``(others, mask, ego)`` tuple.
    """
    if isinstance(X, tuple) and len(X) == 3 and isinstance(X[0], np.ndarray):
        others, mask, ego = X
    else:
        X = list(X)
        if not X:
            raise ValueError("no observations given")
        for o in X:
            if not isinstance(o, ObservationSequence):
                raise TypeError(f"expected ObservationSequence, got {type(o).__name__}")
        others, mask, ego = pack(X, dtype=dtype)
    others = np.asarray(others, dtype=dtype)
    ego = np.asarray(ego, dtype=dtype)
    mask = np.asarray(mask, dtype=bool)
    if others.ndim != 3 or others.shape[2] != OTHER_DIM:
        raise ValueError(f"others must have shape (n, T, {OTHER_DIM}), got {others.shape}")
    if ego.ndim != 2 or ego.shape[1] != EGO_DIM:
        raise ValueError(f"ego must have shape (n, {EGO_DIM}), got {ego.shape}")
    if mask.shape != others.shape[:2] or ego.shape[0] != others.shape[0]:
        raise ValueError("others, mask and ego disagree on shape")
    if mask.sum(axis=1).max(initial=0) > max_sequence:
        raise ValueError(f"observation lists more than {max_sequence} other agents")
    if not (np.isfinite(others).all() and np.isfinite(ego).all()):
        raise ValueError("observations contain non-finite values")
    return others, mask, ego


class LSTMActorCritic(ClassifierMixin, BaseEstimator):
    def __init__(self, lstm_hidden=64, fc_widths=(256, 256), action_count=ACTION_COUNT,
                 max_sequence=MAX_OTHERS, epochs=20, learning_rate=1e-3, batch_size=256,
                 random_state=0, dtype="float32"):
        self.lstm_hidden = lstm_hidden
        self.fc_widths = fc_widths
        self.action_count = action_count
        self.max_sequence = max_sequence
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.random_state = random_state
        self.dtype = dtype

    def _net_config(self):
        return net.NetConfig(lstm_hidden=self.lstm_hidden, fc_widths=tuple(self.fc_widths),
                             action_count=self.action_count, max_sequence=self.max_sequence,
                             dtype=self.dtype)

    def _init_fitted(self, params, config, adam=None):
        self.net_config_ = config
        self.params_ = params
        self.adam_ = adam
        self.classes_ = np.arange(config.action_count)
        return self

    def fit(self, X, y, values=None):
        """Supervised fit: ``y`` are target action indices, ``values`` target values.

        Without ``values`` the value head is regressed toward 0.
        """
        others, mask, ego = check_observations(X, self.max_sequence, self.dtype)
        y = np.asarray(y, dtype=np.int64).ravel()
        if y.shape[0] != others.shape[0]:
            raise ValueError("X and y have different lengths")
        if y.min() < 0 or y.max() >= self.action_count:
            raise ValueError(f"action indices must lie in [0, {self.action_count})")
        v = np.zeros(len(y)) if values is None else np.asarray(values, dtype=np.float64).ravel()
        config = self._net_config()
        params = net.init_params(config, self.random_state)
        params, adam, history = supervised_init((others, mask, ego, y, v), params, self.epochs,
                                                self.learning_rate, self.batch_size, self.random_state)
        self.history_ = history
        return self._init_fitted(params, config, adam)

    def fit_rl(self, config=None, **kwargs):
        """Continue with actor-critic training; keyword arguments go to :func:`run_training`."""
        check_is_fitted(self, "params_")
        result = run_training(config or TrainingConfig(), self.params_, self.adam_, **kwargs)
        self.params_, self.adam_ = result.params, result.adam
        self.training_result_ = result
        return self

    def _forward(self, X):
        check_is_fitted(self, "params_")
        others, mask, ego = check_observations(X, self.max_sequence, self.dtype)
        probs, values, _ = net.forward_arrays(others, mask, ego, self.params_)
        return probs, values

    def predict_proba(self, X):
        return self._forward(X)[0]

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def predict_value(self, X):
        return self._forward(X)[1]

    def as_policy(self, mode=GREEDY, **kwargs):
        check_is_fitted(self, "params_")
        return NetworkPolicy.from_params(self.params_, mode, max_others=self.max_sequence, **kwargs)

    def save(self, path, episodes=0, phase=1):
        check_is_fitted(self, "params_")
        net.save_checkpoint(path, self.params_, self.net_config_, self.adam_, episodes, phase)

    @classmethod
    def from_checkpoint(cls, path, expected_action_count=ACTION_COUNT):
        ckpt = net.load_checkpoint(path, expected_action_count)
        c = ckpt.config
        est = cls(lstm_hidden=c.lstm_hidden, fc_widths=c.fc_widths, action_count=c.action_count,
                  max_sequence=c.max_sequence, dtype=c.dtype)
        est._init_fitted(ckpt.params, c, ckpt.adam)
        est.checkpoint_ = ckpt
        return est

"""Multi-agent actor-critic training with prediction and experience queues.

Roles: simulation workers run episodes; a prediction service answers their
batched network queries from the latest published parameter snapshot; the
trainer is the only parameter writer. ``workers=0`` runs everything inline
on one thread, which is fully deterministic.
"""

import csv
import logging
import math
import os
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .. import net
from ..obs import MAX_OTHERS, build_observation
from ..policy import SAMPLE, NetworkPolicy, params_predictor
from ..sim import (
    PolicyTag, RewardParams, ScenarioError, Status, domain_for, generate_random_scenario,
    run_episode,
)
from .losses import Experience, a3c_loss_and_grads, discounted_returns, effective_gamma

log = logging.getLogger(__name__)

LOG_COLUMNS = ("episode", "wall_time_s", "phase", "n_agents", "mean_reward",
               "value_loss", "policy_loss", "entropy")

MIX_TAGS = (PolicyTag.LEARNED, PolicyTag.NON_COOPERATIVE, PolicyTag.ZERO_VELOCITY)


class TrainingDiverged(RuntimeError):
    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class TrainingConfig:
    gamma: float = 0.97
    beta: float = 1e-4
    lr: float = 2e-5
    batch_size: int = 100
    k_horizon: int = 32
    discount_mode: str = "per_step"
    phase1_agents: tuple = (2, 4)
    phase2_agents: tuple = (2, 10)
    phase1_episodes: int = 1_500_000
    phase2_episodes: int = 400_000
    plateau_window: int = 10_000
    plateau_tol: float = 0.01
    domain_size: float = 0.0  # 0: 4 m up to 8 agents, 6 m beyond
    dt: float = 0.2
    policy_mix: tuple = (0.8, 0.15, 0.05)
    workers: int = 0
    experience_queue: int = 64
    prediction_queue: int = 64
    max_staleness: int = 8
    max_grad_norm: float = 40.0
    sensing_radius: float = math.inf
    max_others: int = MAX_OTHERS
    checkpoint_every: int = 5000
    seed: int = 0

    def __post_init__(self):
        self.phase1_agents = tuple(int(x) for x in self.phase1_agents)
        self.phase2_agents = tuple(int(x) for x in self.phase2_agents)
        self.policy_mix = tuple(float(x) for x in self.policy_mix)
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if len(self.policy_mix) != 3 or abs(sum(self.policy_mix) - 1) > 1e-9:
            raise ValueError("policy_mix must be three probabilities summing to 1")

    @property
    def total_episodes(self):
        return self.phase1_episodes + self.phase2_episodes


@dataclass
class TrainingResult:
    params: dict
    adam: net.AdamState
    episodes: int
    phase: int
    rows: list = field(default_factory=list)
    updates: int = 0
    interrupted: bool = False
    worker_restarts: int = 0


def episode_rng(seed, episode):
    return np.random.default_rng([seed, episode])


def sample_episode(config, episode, phase):
    """Scenario for one training episode; agent 0 always runs the learned policy."""
    rng = episode_rng(config.seed, episode)
    lo, hi = config.phase1_agents if phase == 1 else config.phase2_agents
    while True:
        n = int(rng.integers(lo, hi + 1))
        tags = [PolicyTag.LEARNED] + [MIX_TAGS[int(rng.choice(3, p=config.policy_mix))] for _ in range(n - 1)]
        domain = config.domain_size or domain_for(n)
        try:
            return generate_random_scenario(n, domain, rng, tags, config.dt), rng
        except ScenarioError:
            continue


def collect_episode(scenario, policy, config, episode, rng, reward_params=RewardParams(),
                    bootstrap=None):
    """Run one episode and turn the learned agents' decisions into return targets.

    Returns ``(targets, mean_learned_reward, n_agents)``. ``bootstrap(observations)``
    gives values for agents that timed out; it defaults to the policy's own
    predictor.
    """
    trajectories = {}

    def observer(k, before, decisions, after, events, rewards):
        for i, d in decisions.items():
            if before[i].policy_tag is not PolicyTag.LEARNED:
                continue
            status = after[i].status
            trajectories.setdefault(i, []).append(Experience(
                d.observation, d.action_index, rewards[i],
                status in (Status.AT_GOAL, Status.COLLIDED),
                episode, before[i].agent_id, k - 1, d.value))

    ep = run_episode(scenario, {PolicyTag.LEARNED: policy}, reward_params, observer=observer,
                     episode_id=episode, rng=rng)
    world = ep.final_world()
    pending = [i for i, tr in trajectories.items() if not tr[-1].terminal]
    tails = {}
    if pending:
        predict = bootstrap or policy.predict
        _, values = predict([build_observation(world, i, config.sensing_radius, config.max_others)
                             for i in pending])
        tails = dict(zip(pending, map(float, values)))
    targets = []
    for i, tr in trajectories.items():
        g = effective_gamma(config.gamma, config.discount_mode, config.dt, scenario.agents[i].v_pref)
        targets.extend(discounted_returns(tr, tails.get(i, 0.0), g, config.k_horizon))
    learned = [ep.cumulative_rewards[i] for i in trajectories]
    mean_reward = float(np.mean(learned)) if learned else 0.0
    return targets, mean_reward, scenario.n_agents


class _Learner:
    """Owns the parameters: batches targets, applies updates, tracks phase."""

    def __init__(self, config, params, adam, start_episode, start_phase, out_dir, log_path,
                 on_publish=None):
        self.config = config
        self.params = params
        self.adam = adam or net.AdamState.zeros(params)
        self.net_config = _config_of(params)
        self.episodes = start_episode
        self.phase = start_phase
        self.out_dir = out_dir
        self.buffer = deque()
        self.updates = 0
        self.last_loss = (math.nan, math.nan, math.nan)
        self.rows = []
        self.recent = deque(maxlen=max(1, 2 * config.plateau_window))
        self.phase_start = start_episode
        self.last_good = None
        self.on_publish = on_publish
        self.t0 = time.monotonic()
        self._log_fh = None
        self._log = None
        if log_path:
            new = not os.path.exists(log_path) or os.path.getsize(log_path) == 0
            self._log_fh = open(log_path, "a", newline="")
            self._log = csv.writer(self._log_fh)
            if new:
                self._log.writerow(LOG_COLUMNS)

    def close(self):
        if self._log_fh:
            self._log_fh.close()

    def add_episode(self, targets, mean_reward, n_agents, phase):
        self.buffer.extend(targets)
        while len(self.buffer) >= self.config.batch_size:
            batch = [self.buffer.popleft() for _ in range(self.config.batch_size)]
            self.train_batch(batch)
        self.episodes += 1
        row = (self.episodes, round(time.monotonic() - self.t0, 3), phase, n_agents, mean_reward,
               *self.last_loss)
        self.rows.append(row)
        if self._log:
            self._log.writerow(row)
        self.recent.append(mean_reward)
        if self.config.checkpoint_every and self.episodes % self.config.checkpoint_every == 0:
            self.checkpoint()
        self._maybe_advance_phase()

    def train_batch(self, batch):
        try:
            f_v, f_pi, grads, stats = a3c_loss_and_grads(batch, self.params, self.config.beta,
                                                         self.config.max_others)
        except net.DivergenceError as exc:
            raise TrainingDiverged(str(exc), self.last_good) from exc
        grads, _ = net.clip_by_global_norm(grads, self.config.max_grad_norm)
        self.params, self.adam = net.adam_update(self.params, grads, self.adam, self.config.lr)
        self.updates += 1
        self.last_loss = (f_v, f_pi, stats.entropy)
        if self.on_publish:
            self.on_publish(self.params)

    def _maybe_advance_phase(self):
        c = self.config
        if self.phase != 1 or c.phase2_episodes <= 0:
            return
        done = self.episodes - self.phase_start
        plateau = False
        w = c.plateau_window
        if w and len(self.recent) == 2 * w and done >= 2 * w:
            older = np.mean(list(self.recent)[:w])
            newer = np.mean(list(self.recent)[w:])
            plateau = abs(newer - older) < c.plateau_tol
        if plateau or self.episodes >= c.phase1_episodes:
            log.info("phase 2 starts at episode %d%s", self.episodes, " (plateau)" if plateau else "")
            self.phase = 2
            self.phase_start = self.episodes
            self.recent.clear()

    def finished(self):
        c = self.config
        if self.phase == 1:
            return self.episodes >= c.phase1_episodes and c.phase2_episodes <= 0
        return self.episodes - self.phase_start >= c.phase2_episodes or self.episodes >= c.total_episodes

    def checkpoint(self, name=None):
        if not self.out_dir:
            return None
        path = os.path.join(self.out_dir, name or f"ckpt_{self.episodes:09d}.bin")
        net.save_checkpoint(path, self.params, self.net_config, self.adam, self.episodes, self.phase)
        net.save_checkpoint(os.path.join(self.out_dir, "latest.bin"), self.params, self.net_config,
                            self.adam, self.episodes, self.phase)
        self.last_good = path
        if self._log_fh:
            self._log_fh.flush()
        return path

    def result(self, interrupted=False, restarts=0):
        return TrainingResult(self.params, self.adam, self.episodes, self.phase, self.rows,
                              self.updates, interrupted, restarts)


def _config_of(params):
    h = params["lstm_b"].shape[0] // 4
    return net.NetConfig(
        other_obs_dim=params["lstm_W"].shape[1] - h, ego_dim=params["fc1_W"].shape[1] - h,
        lstm_hidden=h, fc_widths=(params["fc1_W"].shape[0], params["fc2_W"].shape[0]),
        action_count=params["pi_W"].shape[0], dtype=str(params["fc1_W"].dtype))


def run_training(config, params, adam=None, start_episode=0, start_phase=1, out_dir=None,
                 log_path=None, reward_params=RewardParams(), stop_event=None):
    """Train until the episode budget is spent.

    Checkpoints go to ``out_dir`` every ``checkpoint_every`` episodes and at
    the end; ``log_path`` receives one CSV row per episode. An interrupt
    (KeyboardInterrupt or ``stop_event``) writes a final checkpoint and
    returns with ``interrupted`` set. A non-finite loss raises
    :class:`TrainingDiverged` carrying the last good checkpoint.
    """
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    learner = _Learner(config, params, adam, start_episode, start_phase, out_dir, log_path)
    if learner.last_good is None and out_dir:
        learner.checkpoint()
    try:
        if config.workers <= 0:
            result = _run_inline(learner, config, reward_params, stop_event)
        else:
            result = _run_threaded(learner, config, reward_params, stop_event)
        if out_dir:
            learner.checkpoint("final.bin")
        return result
    except KeyboardInterrupt:
        log.warning("interrupted at episode %d; writing final checkpoint", learner.episodes)
        if out_dir:
            learner.checkpoint("final.bin")
        return learner.result(interrupted=True)
    finally:
        learner.close()


def _run_inline(learner, config, reward_params, stop_event):
    while not learner.finished():
        if stop_event is not None and stop_event.is_set():
            return learner.result(interrupted=True)
        phase = learner.phase
        scenario, rng = sample_episode(config, learner.episodes, phase)
        policy = NetworkPolicy(params_predictor(learner.params), SAMPLE, config.sensing_radius,
                               config.max_others)
        try:
            targets, reward, n = collect_episode(scenario, policy, config, learner.episodes, rng,
                                                 reward_params)
        except net.DivergenceError as exc:
            raise TrainingDiverged(str(exc), learner.last_good) from exc
        learner.add_episode(targets, reward, n, phase)
    return learner.result()


class ParameterStore:
    """Immutable snapshots published by the single writer."""

    def __init__(self, params):
        self._lock = threading.Condition()
        self._params = params
        self.version = 0
        self.reader_version = 0

    def publish(self, params):
        with self._lock:
            self._params = params
            self.version += 1
            self._lock.notify_all()

    def snapshot(self):
        with self._lock:
            self.reader_version = self.version
            self._lock.notify_all()
            return self.version, self._params

    def wait_for_reader(self, max_lag, stop, timeout=0.05):
        """Block the writer while the reader's snapshot lags by ``max_lag`` or more."""
        with self._lock:
            while self.version - self.reader_version >= max_lag and not stop.is_set():
                self._lock.wait(timeout)


class PredictionService(threading.Thread):
    """Answers workers' observation batches from the latest snapshot."""

    def __init__(self, store, requests, stop, max_len, max_batch=256):
        super().__init__(daemon=True, name="predictor")
        self.store = store
        self.requests = requests
        self.stop = stop
        self.max_len = max_len
        self.max_batch = max_batch
        self.error = None

    def run(self):
        try:
            while not self.stop.is_set():
                _, params = self.store.snapshot()
                try:
                    first = self.requests.get(timeout=0.05)
                except queue.Empty:
                    continue
                pending = [first]
                size = len(first[0])
                while size < self.max_batch:
                    try:
                        req = self.requests.get_nowait()
                    except queue.Empty:
                        break
                    pending.append(req)
                    size += len(req[0])
                observations = [o for obs, _ in pending for o in obs]
                probs, values, _ = net.forward(observations, params, self.max_len)
                pos = 0
                for obs, reply in pending:
                    reply.put((probs[pos:pos + len(obs)], values[pos:pos + len(obs)]))
                    pos += len(obs)
        except Exception as exc:  # surfaced by the trainer
            self.error = exc
            log.exception("prediction service failed")


class _Worker(threading.Thread):
    def __init__(self, wid, config, dispatcher, requests, experiences, stop, reward_params):
        super().__init__(daemon=True, name=f"worker-{wid}")
        self.config = config
        self.dispatcher = dispatcher
        self.requests = requests
        self.experiences = experiences
        self.stop = stop
        self.reward_params = reward_params
        self.reply = queue.Queue(maxsize=1)
        self.error = None

    def predict(self, observations):
        self.requests.put((observations, self.reply))
        while True:
            try:
                return self.reply.get(timeout=0.5)
            except queue.Empty:
                if self.stop.is_set():
                    raise _Stopped()

    def run(self):
        try:
            policy = NetworkPolicy(self.predict, SAMPLE, self.config.sensing_radius, self.config.max_others)
            while not self.stop.is_set():
                job = self.dispatcher()
                if job is None:
                    return
                episode, phase = job
                scenario, rng = sample_episode(self.config, episode, phase)
                targets, reward, n = collect_episode(scenario, policy, self.config, episode, rng,
                                                     self.reward_params)
                item = (targets, reward, n, phase)
                while not self.stop.is_set():
                    try:
                        self.experiences.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
        except _Stopped:
            return
        except Exception as exc:
            self.error = exc
            log.exception("%s crashed", self.name)


class _Stopped(Exception):
    pass


def _run_threaded(learner, config, reward_params, stop_event):
    stop = threading.Event()
    store = ParameterStore(learner.params)
    requests = queue.Queue(maxsize=config.prediction_queue)
    experiences = queue.Queue(maxsize=config.experience_queue)
    lock = threading.Lock()
    state = {"next": learner.episodes}

    def dispatcher():
        with lock:
            if state["next"] >= config.total_episodes:
                return None
            ep = state["next"]
            state["next"] += 1
            return ep, learner.phase

    def publish(params):
        store.wait_for_reader(config.max_staleness, stop)
        store.publish(params)

    learner.on_publish = publish
    predictor = PredictionService(store, requests, stop, config.max_others)
    predictor.start()
    workers = [_Worker(w, config, dispatcher, requests, experiences, stop, reward_params)
               for w in range(config.workers)]
    for w in workers:
        w.start()
    restarts = 0
    try:
        while not learner.finished():
            if stop_event is not None and stop_event.is_set():
                return learner.result(interrupted=True, restarts=restarts)
            if isinstance(predictor.error, net.DivergenceError):
                raise TrainingDiverged(str(predictor.error), learner.last_good) from predictor.error
            if predictor.error is not None:
                raise RuntimeError("prediction service failed") from predictor.error
            try:
                item = experiences.get(timeout=0.1)
            except queue.Empty:
                for k, w in enumerate(workers):
                    if not w.is_alive() and w.error is not None:
                        log.warning("restarting %s after %r", w.name, w.error)
                        workers[k] = _Worker(k, config, dispatcher, requests, experiences, stop, reward_params)
                        workers[k].start()
                        restarts += 1
                if all(not w.is_alive() for w in workers) and experiences.empty():
                    break
                continue
            learner.add_episode(*item)
        return learner.result(restarts=restarts)
    finally:
        stop.set()
        for w in workers:
            w.join(timeout=2)
        predictor.join(timeout=2)

"""Flat INI-style run configuration with ``section.key=value`` overrides.

Every key is optional; the defaults below are the documented values.
Unknown sections or keys are rejected.
"""

import configparser
import math

DEFAULTS = {
    "run": {
        "seed": 0,
    },
    "sim": {
        "dt": 0.2,
        "goal_reward": 1.0,
        "collision_penalty": -0.25,
        "proximity_threshold": 0.2,
        "proximity_offset": -0.1,
        "proximity_slope": 0.05,
    },
    "obs": {
        "sensing_radius": math.inf,
        "max_others": 19,
    },
    "net": {
        "lstm_hidden": 64,
        "fc_widths": (256, 256),
    },
    "pretrain": {
        "n_examples": 100_000,
        "epochs": 20,
        "lr": 1e-3,
        "batch_size": 256,
        "n_agents": (1, 2),
        "domain_size": 4.0,
        "veto_margin": 0.3,
        "veto_horizon": 1,
        "random_heading": 0.5,
        "check_scenarios": 100,
    },
    "trainer": {
        "gamma": 0.97,
        "beta": 1e-4,
        "lr": 2e-5,
        "batch_size": 100,
        "k_horizon": 32,
        "discount_mode": "per_step",
        "phase1_agents": (2, 4),
        "phase2_agents": (2, 10),
        "phase1_episodes": 1_500_000,
        "phase2_episodes": 400_000,
        "plateau_window": 10_000,
        "plateau_tol": 0.01,
        "domain_size": 0.0,
        "policy_mix": (0.8, 0.15, 0.05),
        "workers": 0,
        "experience_queue": 64,
        "prediction_queue": 64,
        "max_staleness": 8,
        "max_grad_norm": 40.0,
        "checkpoint_every": 5000,
    },
    "eval": {
        "n_agents": 2,
        "count": 500,
        "domain_size": 0.0,
        "jobs": 1,
        "mode": "greedy",
    },
    "rollout": {
        "kind": "circle",
        "n_agents": 10,
        "case": 0,
        "mode": "greedy",
        "record_probs": False,
    },
}


class ConfigError(ValueError):
    pass


def valid_keys():
    return sorted(f"{s}.{k}" for s, keys in DEFAULTS.items() for k in keys)


def _parse(raw, default):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, tuple):
        items = [x for x in raw.replace("(", "").replace(")", "").split(",") if x.strip()]
        kind = type(default[0]) if default else float
        return tuple(kind(float(x)) if kind is int else kind(x) for x in items)
    if isinstance(default, int):
        return int(float(raw))
    if isinstance(default, float):
        return float(raw)
    return raw


def _format(value):
    if isinstance(value, tuple):
        return ", ".join(repr(v) if isinstance(v, str) else str(v) for v in value)
    return str(value)


class RunConfig:
    """Merged configuration: defaults, then the config file, then overrides."""

    def __init__(self, values=None):
        self.values = {s: dict(keys) for s, keys in DEFAULTS.items()}
        for key, value in (values or {}).items():
            self.set(key, value)

    def _check(self, section, key):
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ConfigError(f"unknown config key {section}.{key}; valid keys: {', '.join(valid_keys())}")

    def set(self, dotted, value):
        section, _, key = dotted.partition(".")
        self._check(section, key)
        default = DEFAULTS[section][key]
        if isinstance(value, str):
            try:
                value = _parse(value, default)
            except ValueError as exc:
                raise ConfigError(f"{dotted}: {exc}") from exc
        self.values[section][key] = value

    def __getitem__(self, section):
        return self.values[section]

    @classmethod
    def load(cls, path=None, overrides=()):
        cfg = cls()
        if path:
            parser = configparser.ConfigParser()
            parser.optionxform = str
            with open(path) as fh:
                parser.read_file(fh)
            for section in parser.sections():
                for key, raw in parser.items(section):
                    cfg.set(f"{section}.{key}", raw)
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form section.key=value")
            key, _, raw = item.partition("=")
            cfg.set(key.strip(), raw)
        return cfg

    def write(self, path):
        parser = configparser.ConfigParser()
        parser.optionxform = str
        for section, keys in self.values.items():
            parser[section] = {k: _format(v) for k, v in keys.items()}
        with open(path, "w") as fh:
            parser.write(fh)

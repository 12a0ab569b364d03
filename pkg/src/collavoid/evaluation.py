"""Fixed test suites, per-case rollouts and the failure / extra-time report."""

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .sim import (
    AgentSpec, PolicyTag, ScenarioSpec, Status, domain_for, generate_random_scenario,
    read_suite, run_episode, write_suite,
)
from .sim.policies import NonCooperativePolicy, Policy, ZeroVelocityPolicy

SUCCESS = "success"
COLLISION = "collision"
STUCK = "stuck"


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class TestSuite:
    suite_id: str
    scenarios: tuple
    seed: int = None

    __test__ = False  # not a pytest class

    def save(self, path):
        write_suite(path, self.scenarios, self.suite_id, self.seed)

    @classmethod
    def load(cls, path):
        suite_id, seed, scenarios = read_suite(path)
        return cls(suite_id, tuple(scenarios), seed)


def generate_suite(n_agents, count=500, seed=0, domain_size=None, suite_id=None, dt=0.2):
    domain = domain_size or domain_for(n_agents)
    rng = np.random.default_rng(seed)
    scenarios = tuple(generate_random_scenario(n_agents, domain, rng, dt=dt) for _ in range(count))
    return TestSuite(suite_id or f"random_n{n_agents}_{domain:g}m_{count}_s{seed}", scenarios, seed)


def generate_head_on_suite(count=20, seed=0, dt=0.2):
    """Two agents on a shared line driving straight at each other."""
    rng = np.random.default_rng(seed)
    scenarios = []
    for k in range(count):
        half = float(rng.uniform(1.5, 3.0))
        angle = float(rng.uniform(-math.pi, math.pi))
        c, s = math.cos(angle), math.sin(angle)
        a, b = (-half * c, -half * s), (half * c, half * s)
        agents = [
            AgentSpec(a, b, float(rng.uniform(0.2, 0.5)), float(rng.uniform(0.5, 2.0))),
            AgentSpec(b, a, float(rng.uniform(0.2, 0.5)), float(rng.uniform(0.5, 2.0))),
        ]
        scenarios.append(ScenarioSpec(agents, 2 * half + 2, k, dt).validate())
    return TestSuite(f"head_on_{count}_s{seed}", tuple(scenarios), seed)


def extra_time_to_goal(log, agent_id):
    """Arrival time minus the straight-line time at preferred speed."""
    outcome = log.outcomes.get(agent_id)
    if outcome is None or outcome.status is not Status.AT_GOAL:
        raise EvaluationError(f"agent {agent_id} did not reach its goal")
    agent = log.scenario.agents[agent_id]
    return outcome.t_goal - math.dist(agent.start, agent.goal) / agent.v_pref


@dataclass
class CaseOutcome:
    case: int
    result: str
    statuses: list
    extra_times: list = field(default_factory=list)


@dataclass
class OutcomeSet:
    suite_id: str
    policy: str
    cases: list

    def save(self, path):
        with open(path, "w") as fh:
            json.dump({"format": 1, "suite_id": self.suite_id, "policy": self.policy,
                       "cases": [asdict(c) for c in self.cases]}, fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        return cls(doc["suite_id"], doc["policy"], [CaseOutcome(**c) for c in doc["cases"]])


def classify(log):
    """Collision dominates: a case with any collision is a collision case."""
    statuses = [log.outcomes[i].status for i in range(log.scenario.n_agents)]
    if Status.COLLIDED in statuses:
        return COLLISION
    if Status.TIMED_OUT in statuses:
        return STUCK
    return SUCCESS


def as_policy(policy):
    if isinstance(policy, Policy):
        return policy
    tag = PolicyTag(policy)
    if tag is PolicyTag.NON_COOPERATIVE:
        return NonCooperativePolicy()
    if tag is PolicyTag.ZERO_VELOCITY:
        return ZeroVelocityPolicy()
    raise EvaluationError(f"no built-in policy for {tag.value}")


def evaluate_case(policy, scenario, case=0):
    # every agent runs the evaluated policy
    log = run_episode(scenario.with_tags(PolicyTag.LEARNED), {PolicyTag.LEARNED: policy}, episode_id=case)
    result = classify(log)
    extra = [extra_time_to_goal(log, i) for i in range(scenario.n_agents)] if result == SUCCESS else []
    return CaseOutcome(case, result, [log.outcomes[i].status.value for i in range(scenario.n_agents)], extra)


def _evaluate_chunk(args):
    policy, items = args
    return [evaluate_case(policy, sc, k) for k, sc in items]


def evaluate(policy, suite, name=None, jobs=1):
    """Run ``policy`` on every case of ``suite``.

    Each case's randomness comes from its own scenario seed, so the outcome
    does not depend on ``jobs`` or on case order.
    """
    policy = as_policy(policy)
    items = list(enumerate(suite.scenarios))
    if jobs > 1 and len(items) > 1:
        chunks = [items[k::jobs] for k in range(jobs)]
        with ProcessPoolExecutor(jobs) as ex:
            cases = [c for part in ex.map(_evaluate_chunk, [(policy, ch) for ch in chunks]) for c in part]
        cases.sort(key=lambda c: c.case)
    else:
        cases = _evaluate_chunk((policy, items))
    return OutcomeSet(suite.suite_id, name or type(policy).__name__, cases)


def nearest_rank_percentile(samples, pct):
    """Smallest sample with at least ``pct`` percent of the data at or below it."""
    xs = sorted(samples)
    if not xs:
        return math.nan
    rank = max(1, math.ceil(pct / 100.0 * len(xs)))
    return xs[rank - 1]


@dataclass
class Metrics:
    policy: str
    n_cases: int
    pct_collisions: float
    pct_stuck: float
    extra_time_mean: float
    extra_time_p75: float
    extra_time_p90: float
    n_timing_cases: int

    @property
    def pct_failures(self):
        return self.pct_collisions + self.pct_stuck


def compare(outcome_sets):
    """Table-style metrics for several policies evaluated on one suite.

    Failure rates use every case. Extra-time statistics pool the per-agent
    extra times from the cases every policy finished successfully.
    """
    sets = list(outcome_sets.values()) if isinstance(outcome_sets, dict) else list(outcome_sets)
    if not sets:
        raise EvaluationError("nothing to compare")
    suite_ids = {s.suite_id for s in sets}
    if len(suite_ids) != 1:
        raise EvaluationError(f"outcomes come from different suites: {sorted(suite_ids)}")
    n_cases = {len(s.cases) for s in sets}
    if len(n_cases) != 1:
        raise EvaluationError("outcome sets have different case counts")
    common = set.intersection(*({c.case for c in s.cases if c.result == SUCCESS} for s in sets))
    metrics = []
    for s in sets:
        n = len(s.cases)
        coll = sum(c.result == COLLISION for c in s.cases)
        stuck = sum(c.result == STUCK for c in s.cases)
        times = [t for c in s.cases if c.case in common for t in c.extra_times]
        metrics.append(Metrics(
            s.policy, n, 100.0 * coll / n if n else 0.0, 100.0 * stuck / n if n else 0.0,
            float(np.mean(times)) if times else math.nan,
            nearest_rank_percentile(times, 75), nearest_rank_percentile(times, 90), len(common)))
    return metrics


REPORT_COLUMNS = ("policy", "n_cases", "extra_time_mean", "extra_time_p75", "extra_time_p90",
                  "pct_failures", "pct_collisions", "pct_stuck", "n_timing_cases")


def write_report_csv(path, metrics, suite_id=""):
    with open(path, "w", newline="") as fh:
        fh.write(f"# suite={suite_id} percentile=nearest-rank\n")
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for m in metrics:
            w.writerow([m.policy, m.n_cases, m.extra_time_mean, m.extra_time_p75, m.extra_time_p90,
                        m.pct_failures, m.pct_collisions, m.pct_stuck, m.n_timing_cases])


def format_report(metrics, suite_id=""):
    width = max([len(m.policy) for m in metrics] + [6])
    lines = [f"suite: {suite_id}",
             f"{'policy':<{width}}  extra time to goal (s) avg / 75th / 90th   % failures (coll / stuck)"]
    for m in metrics:
        lines.append(f"{m.policy:<{width}}  {m.extra_time_mean:5.2f} / {m.extra_time_p75:5.2f} / "
                     f"{m.extra_time_p90:5.2f}            {m.pct_failures:5.1f} "
                     f"({m.pct_collisions:.1f} / {m.pct_stuck:.1f})")
    lines.append(f"timing over {metrics[0].n_timing_cases} mutually successful cases")
    return "\n".join(lines)

from .core import (
    ACTION_COUNT, DEFAULT_DT, Action, ActionSet, AgentState, PolicyTag, RewardParams,
    SimulationError, Status, StepEvents, arrival_tolerance, build_action_set,
    min_surface_distance, reward, reward_from_distance, step, step_rewards, surface_distance,
    wrap_angle,
)
from .episode import CSV_COLUMNS, EpisodeLog, Outcome, run_episode
from .policies import (
    Decision, NonCooperativePolicy, Policy, ScriptedPolicy, WaitThenGoPolicy, ZeroVelocityPolicy,
    baseline_policy, goal_seeking_action,
)
from .scenarios import (
    AgentSpec, ScenarioError, ScenarioSpec, default_time_limit, domain_for,
    generate_random_scenario, generate_structured_scenario, read_suite, write_suite,
)

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collavoid.sim import (
    ACTION_COUNT, Action, AgentSpec, AgentState, PolicyTag, RewardParams, ScenarioError, ScenarioSpec,
    SimulationError, Status, build_action_set, generate_random_scenario, generate_structured_scenario,
    read_suite, reward, reward_from_distance, run_episode, step, step_rewards, wrap_angle, write_suite,
)
from collavoid.sim.policies import NonCooperativePolicy, WaitThenGoPolicy, ZeroVelocityPolicy


def agent(i, pos, goal=(10.0, 0.0), r=0.5, v=1.0, heading=0.0, **kw):
    return AgentState(i, tuple(map(float, pos)), (0.0, 0.0), heading, r, tuple(map(float, goal)), v, **kw)


# reward oracle: written independently from the branch table
def reward_oracle(d, goal):
    if goal:
        return 1.0
    if d < 0:
        return -0.25
    if 0 < d < 0.2:
        return -0.1 + 0.05 * d
    return 0.0


class TestReward:
    @pytest.mark.parametrize("d,goal,expected", [
        (0.5, True, 1.0), (-0.1, True, 1.0), (-0.01, False, -0.25), (0.1, False, -0.095),
        (0.2, False, 0.0), (1.0, False, 0.0), (math.inf, False, 0.0),
    ])
    def test_branches(self, d, goal, expected):
        assert reward_from_distance(d, goal) == pytest.approx(expected, abs=1e-12)

    def test_touching_is_not_penalized(self):
        # the proximity band is open at 0
        assert reward_from_distance(0.0, False) == 0.0

    def test_from_world(self):
        a = agent(0, (0, 0))
        b = agent(1, (1.1, 0))
        assert reward(a, [a, b], False) == pytest.approx(-0.1 + 0.05 * 0.1)
        assert reward(a, [a], False) == 0.0

    @settings(max_examples=300, deadline=None)
    @given(st.floats(-3, 3, allow_nan=False), st.booleans())
    def test_matches_oracle(self, d, goal):
        assert reward_from_distance(d, goal) == reward_oracle(d, goal)

    def test_params_validated(self):
        with pytest.raises(ValueError):
            RewardParams(proximity_threshold=0.0)


class TestActions:
    def test_layout(self):
        acts = build_action_set(2.0)
        assert len(acts) == ACTION_COUNT == 12
        assert [a.speed for a in acts] == [2.0] * 6 + [1.0] * 3 + [0.0] * 3
        np.testing.assert_allclose([a.heading_change for a in acts[:6]], np.linspace(-math.pi / 6, math.pi / 6, 6))
        assert [a.heading_change for a in acts[6:9]] == [-math.pi / 6, 0.0, math.pi / 6]

    def test_scales_with_v_pref(self):
        assert build_action_set(0.5)[0].speed == 0.5
        with pytest.raises(SimulationError):
            build_action_set(0.0)

    @given(st.floats(-20, 20, allow_nan=False))
    def test_wrap_range(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


class TestStep:
    def test_forward_euler(self):
        a = agent(0, (0, 0), heading=0.0)
        (b,), ev = step([a], {0: Action(1.0, math.pi / 6)}, 0.2)
        assert b.heading == pytest.approx(math.pi / 6)
        assert b.position == pytest.approx((0.2 * math.cos(math.pi / 6), 0.2 * math.sin(math.pi / 6)))
        assert b.velocity == pytest.approx((math.cos(math.pi / 6), math.sin(math.pi / 6)))
        assert ev.moved == [0] and b.elapsed == pytest.approx(0.2)

    def test_zero_speed_turns_in_place(self):
        a = agent(0, (1, 1))
        (b,), _ = step([a], {0: Action(0.0, -math.pi / 6)}, 0.2)
        assert b.position == (1.0, 1.0) and b.heading == pytest.approx(-math.pi / 6)

    def test_collision_freezes_both(self):
        w = [agent(0, (0, 0)), agent(1, (1.1, 0), goal=(-10, 0), heading=math.pi)]
        w2, ev = step(w, {0: Action(1, 0), 1: Action(1, 0)}, 0.2)
        assert set(ev.collided_with) == {0, 1}
        assert all(a.status is Status.COLLIDED for a in w2)
        r = step_rewards(w2, ev)
        assert r == {0: -0.25, 1: -0.25}
        # frozen agents are skipped afterwards
        w3, ev3 = step(w2, {}, 0.2)
        assert w3 == w2 and ev3.moved == []

    def test_arrival(self):
        a = agent(0, (0, 0), goal=(0.25, 0))
        (b,), ev = step([a], {0: Action(1.0, 0)}, 0.2)
        assert b.status is Status.AT_GOAL and ev.arrived == {0: pytest.approx(0.2)}
        assert step_rewards([b], ev) == {0: 1.0}

    def test_collision_beats_goal(self):
        w = [agent(0, (0, 0), goal=(0.2, 0)), agent(1, (1.15, 0), goal=(-5, 0), heading=math.pi)]
        w2, ev = step(w, {0: Action(1, 0), 1: Action(1, 0)}, 0.2)
        assert w2[0].status is Status.COLLIDED and 0 not in ev.arrived

    def test_frozen_agent_is_not_an_obstacle(self):
        done = agent(1, (0.5, 0), goal=(0.5, 0), status=Status.AT_GOAL)
        w2, ev = step([agent(0, (0, 0)), done], {0: Action(1, 0)}, 0.2)
        assert w2[0].status is Status.ACTIVE and not ev.collided_with

    def test_timeout(self):
        a = agent(0, (0, 0), elapsed=1.0)
        (b,), ev = step([a], {0: Action(0, 0)}, 0.2, time_limit=1.0)
        assert b.status is Status.TIMED_OUT and ev.timed_out == [0]

    def test_missing_action(self):
        with pytest.raises(SimulationError):
            step([agent(0, (0, 0))], {}, 0.2)

    def test_invalid_agent(self):
        with pytest.raises(SimulationError):
            agent(0, (0, 0), r=0.0)


class TestScenarios:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 10_000))
    def test_random_scenarios_are_valid(self, n, seed):
        sc = generate_random_scenario(n, 4.0, seed)
        assert sc.n_agents == n
        sc.validate()
        for i, a in enumerate(sc.agents):
            assert math.dist(a.start, a.goal) >= 1.0
            assert 0.2 <= a.radius <= 0.8 and 0.5 <= a.v_pref <= 2.0
            assert all(abs(c) <= 2.0 for c in a.start + a.goal)
            for b in sc.agents[:i]:
                assert math.dist(a.start, b.start) - a.radius - b.radius >= 0.2

    def test_seeded(self):
        assert generate_random_scenario(3, 4.0, 7) == generate_random_scenario(3, 4.0, 7)

    def test_overcrowded(self):
        with pytest.raises(ScenarioError):
            generate_random_scenario(40, 2.0, 0)

    def test_circle(self):
        sc = generate_structured_scenario("circle", 10)
        for a in sc.agents:
            assert a.goal == pytest.approx((-a.start[0], -a.start[1]))
        assert generate_structured_scenario("circle", 20).n_agents == 20

    def test_pair_swaps(self):
        sc = generate_structured_scenario("pair_swaps", 6)
        assert sc.n_agents == 6
        with pytest.raises(ScenarioError):
            generate_structured_scenario("pair_swaps", 5)
        with pytest.raises(ScenarioError):
            generate_structured_scenario("spiral", 4)

    def test_overlap_rejected(self):
        with pytest.raises(ScenarioError):
            ScenarioSpec([AgentSpec((0, 0), (1, 1), 0.5, 1), AgentSpec((0.5, 0), (-1, 1), 0.5, 1)], 4).validate()

    def test_time_limit(self):
        sc = ScenarioSpec([AgentSpec((0, 0), (20, 0), 0.5, 0.5)], 50)
        assert sc.time_limit == pytest.approx(160.0)
        assert ScenarioSpec([AgentSpec((0, 0), (1, 0), 0.5, 1)], 4).time_limit == 30.0

    def test_suite_roundtrip(self, tmp_path):
        scs = [generate_random_scenario(3, 4.0, s) for s in range(4)]
        path = tmp_path / "s.json"
        write_suite(path, scs, "x", 3)
        assert read_suite(path) == ("x", 3, scs)
        doc = json.loads(path.read_text())
        doc["format"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ScenarioError):
            read_suite(path)


class TestEpisode:
    def test_straight_line_extra_time(self):
        sc = ScenarioSpec([AgentSpec((-2, 0), (2, 0), 0.3, 1.0)], 5)
        log = run_episode(sc, {PolicyTag.LEARNED: NonCooperativePolicy()})
        o = log.outcomes[0]
        assert o.status is Status.AT_GOAL
        assert abs(o.t_goal - 4.0) <= 0.2 + 1e-9
        assert log.cumulative_rewards[0] == 1.0

    def test_zero_velocity_times_out(self):
        sc = ScenarioSpec([AgentSpec((-1, 0), (1, 0), 0.3, 1.0)], 4, time_limit=2.0)
        log = run_episode(sc, {PolicyTag.LEARNED: ZeroVelocityPolicy()})
        assert log.outcomes[0].status is Status.TIMED_OUT
        assert log.snapshots[-1][0].position == (-1.0, 0.0)

    def test_wait_then_go(self):
        sc = ScenarioSpec([AgentSpec((-2, 0), (2, 0), 0.3, 1.0)], 5)
        log = run_episode(sc, {PolicyTag.LEARNED: WaitThenGoPolicy(2.0)})
        assert log.outcomes[0].t_goal - 4.0 == pytest.approx(2.0, abs=0.2 + 1e-9)

    def test_mixed_tags_use_baselines(self):
        sc = ScenarioSpec([AgentSpec((-2, 0), (2, 0), 0.3, 1.0),
                           AgentSpec((-2, 1.5), (2, 1.5), 0.3, 1.0, PolicyTag.ZERO_VELOCITY)], 5, time_limit=10)
        log = run_episode(sc, {PolicyTag.LEARNED: NonCooperativePolicy()})
        assert log.outcomes[0].status is Status.AT_GOAL
        assert log.outcomes[1].status is Status.TIMED_OUT

    def test_log_files(self, tmp_path):
        sc = generate_random_scenario(3, 4.0, 1)
        log = run_episode(sc, {PolicyTag.LEARNED: NonCooperativePolicy()})
        log.write_json(tmp_path / "e.json")
        log.write_csv(tmp_path / "e.csv")
        doc = json.loads((tmp_path / "e.json").read_text())
        assert doc["n_steps"] == len(log.snapshots) - 1
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines[0] == "episode_id,t,agent_id,px,py,vx,vy,psi,status"
        assert len(lines) == 1 + 3 * len(log.snapshots)

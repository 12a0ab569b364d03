import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collavoid.obs import MAX_OTHERS, build_observation, pack
from collavoid.sim import AgentState, Status


def make_world(rng, n):
    world = []
    for i in range(n):
        pos = tuple(rng.uniform(-5, 5, 2))
        goal = tuple(rng.uniform(-5, 5, 2))
        vel = tuple(rng.uniform(-1, 1, 2))
        world.append(AgentState(i, pos, vel, float(rng.uniform(-math.pi, math.pi)),
                                float(rng.uniform(0.2, 0.8)), goal, float(rng.uniform(0.5, 2))))
    return world


def transform(world, angle, shift):
    c, s = math.cos(angle), math.sin(angle)

    def rot(p):
        return (c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1])

    def rotv(v):
        return (c * v[0] - s * v[1], s * v[0] + c * v[1])

    return [AgentState(a.agent_id, rot(a.position), rotv(a.velocity), a.heading + angle, a.radius,
                       rot(a.goal), a.v_pref) for a in world]


def flat(obs):
    return np.array(list(obs.ego) + [x for o in obs.others for x in o])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.floats(-10, 10), st.floats(-50, 50), st.floats(-50, 50))
def test_rigid_motion_invariance(seed, n, angle, dx, dy):
    world = make_world(np.random.default_rng(seed), n)
    moved = transform(world, angle, (dx, dy))
    for i in range(n):
        a, b = build_observation(world, i), build_observation(moved, i)
        assert len(a.others) == len(b.others)
        fa, fb = flat(a), flat(b)
        # heading is an angle: compare on the circle
        dpsi = math.remainder(fa[2] - fb[2], 2 * math.pi)
        fa[2] = fb[2] = 0.0
        assert abs(dpsi) < 1e-9
        np.testing.assert_allclose(fa, fb, atol=1e-9, rtol=0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 25))
def test_sorted_farthest_first(seed, n):
    world = make_world(np.random.default_rng(seed), n)
    obs = build_observation(world, 0)
    d = [o.distance for o in obs.others]
    assert all(x >= y for x, y in zip(d, d[1:]))
    assert len(obs.others) == min(n - 1, MAX_OTHERS)


def test_ego_frame_layout():
    ego = AgentState(0, (1.0, 1.0), (0.0, 0.0), math.pi / 2, 0.5, (1.0, 5.0), 1.2)
    other = AgentState(1, (1.0, 3.0), (0.0, -1.0), 0.0, 0.3, (0.0, 0.0), 1.0)
    obs = build_observation([ego, other], 0)
    assert obs.ego == pytest.approx((4.0, 1.2, 0.0, 0.5))
    (o,) = obs.others
    # goal direction is +y, so the other agent sits straight ahead and moves toward the ego
    assert o == pytest.approx((2.0, 0.0, -1.0, 0.0, 0.3, 2.0, 0.8), abs=1e-12)


def test_closest_kept_when_truncating():
    world = [AgentState(0, (0.0, 0.0), (0, 0), 0, 0.1, (1.0, 0.0), 1.0)]
    world += [AgentState(i, (float(i), 0.0), (0, 0), 0, 0.1, (0.0, 0.0), 1.0) for i in range(1, 25)]
    obs = build_observation(world, 0)
    assert len(obs.others) == 19
    assert obs.others[-1].distance == 1.0 and obs.others[0].distance == 19.0


def test_ties_by_id_and_filters():
    ego = AgentState(0, (0.0, 0.0), (0, 0), 0, 0.2, (1.0, 0.0), 1.0)
    a = AgentState(2, (0.0, 1.0), (0, 0), 0, 0.2, (0.0, 0.0), 1.0)
    b = AgentState(1, (0.0, -1.0), (0, 0), 0, 0.2, (0.0, 0.0), 1.0)
    done = AgentState(3, (0.0, 0.5), (0, 0), 0, 0.2, (0.0, 0.5), 1.0, status=Status.AT_GOAL)
    far = AgentState(4, (9.0, 0.0), (0, 0), 0, 0.2, (0.0, 0.0), 1.0)
    obs = build_observation([ego, a, b, done, far], 0, sensing_radius=5.0)
    assert [o.py for o in obs.others] == [pytest.approx(-1.0), pytest.approx(1.0)]


def test_degenerate_goal_uses_stored_frame():
    ego = AgentState(0, (2.0, 2.0), (0, 0), 1.0, 0.2, (2.0, 2.0), 1.0, frame_angle=0.25)
    obs = build_observation([ego], 0)
    assert obs.ego.goal_distance == 0.0
    assert obs.ego.heading == pytest.approx(0.75)


def test_pack_left_pads():
    rng = np.random.default_rng(0)
    world = make_world(rng, 4)
    obs = [build_observation(world, 0), build_observation(world[:2], 0), build_observation(world[:1], 0)]
    others, mask, ego = pack(obs)
    assert others.shape == (3, 3, 7)
    assert mask.tolist() == [[True] * 3, [False, False, True], [False] * 3]
    np.testing.assert_array_equal(others[1, 2], obs[1].others[0])
    assert not others[2].any()
    with pytest.raises(ValueError):
        pack(obs, max_len=2)

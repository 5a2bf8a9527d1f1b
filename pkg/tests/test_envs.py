"""Benchmark environments and the episode wrapper."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from switchopt.envs import (
    ENV_MAKERS,
    EnvConfig,
    Episode,
    boundary_segments,
    greedy_rollout,
    make_env,
    make_example1,
    make_example2,
    make_example3,
)
from switchopt.simulate import IntegratorConfig, horizon_steps, rollout_open_loop
from switchopt.systems import classify, vector_field


def test_env_registry():
    assert set(ENV_MAKERS) == {"ex1", "ex2", "ex3", "analytic1", "analytic2"}
    for name in ENV_MAKERS:
        env = make_env(name)
        assert env.name == name
    with pytest.raises(KeyError):
        make_env("ex99")


def test_benchmark_env_shapes():
    ex1 = make_env("ex1")
    assert ex1.system.n_x == 2 and ex1.system.n_u == 1
    assert len(ex1.system.modes) == 4
    assert ex1.system.horizon == 2.0
    assert ex1.horizon_steps == 200
    assert ex1.obs_dim == 3
    assert ex1.act_dim == 1
    assert ex1.control_scale == 10.0
    np.testing.assert_array_equal(ex1.x0, [-8.0, -6.0])

    ex3 = make_env("ex3")
    assert len(ex3.system.modes) == 7
    assert ex3.system.fallback_mode == 7
    np.testing.assert_array_equal(ex3.x0, [8.0, 8.0])

    a1 = make_env("analytic1")
    assert a1.system.n_x == 1
    assert a1.system.horizon == 1.0
    assert a1.control_scale == 50.0
    np.testing.assert_array_equal(a1.x0, [2.0])


def test_example_dynamics_fields():
    # Scalar pair: rate-2 integrator above the threshold, rate-1 below.
    a1 = make_env("analytic1").system
    assert vector_field(a1, [2.0], [3.0])[0] == pytest.approx(6.0)
    assert vector_field(a1, [0.5], [3.0])[0] == pytest.approx(3.0)
    # Unstable above, stable below.
    a2 = make_env("analytic2").system
    assert vector_field(a2, [2.0], [1.0])[0] == pytest.approx(5.0)
    assert vector_field(a2, [0.5], [1.0])[0] == pytest.approx(0.5)


def test_example1_mode_matrices():
    sys = make_example1().system
    x = np.array([1.0, -2.0])
    u = np.array([0.5])
    for mode_id in (1, 2, 3, 4):
        dyn = sys.mode(mode_id).dynamics
        assert dyn.is_linear
        want = dyn.A @ x + dyn.B @ u
        np.testing.assert_allclose(dyn(x, u), want)
    # All four share the same input channel.
    for mode_id in (1, 2, 3, 4):
        np.testing.assert_array_equal(sys.mode(mode_id).dynamics.B, [[1.0], [1.0]])


def test_example2_differs_from_example1_only_in_region3_cost():
    s1 = make_example1().system
    s2 = make_example2().system
    for mid in (1, 2, 4):
        assert s2.mode(mid).cost.scale == s1.mode(mid).cost.scale == 0.5
    assert s2.mode(3).cost.scale == 5.0
    for mid in (1, 2, 3, 4):
        np.testing.assert_array_equal(s1.mode(mid).dynamics.A, s2.mode(mid).dynamics.A)


def test_observation_scaling_and_clock(ex1):
    obs = ex1.observe(np.array([-8.0, -6.0]), 0.0)
    np.testing.assert_allclose(obs, [-0.8, -0.6, 0.0])
    obs = ex1.observe(np.array([5.0, 0.0]), 1.0)
    np.testing.assert_allclose(obs, [0.5, 0.0, 0.5])
    assert obs.shape == (ex1.obs_dim,)


def test_episode_reward_is_negative_cost_step(ex1):
    ep = Episode(ex1)
    obs0 = ep.reset()
    np.testing.assert_allclose(obs0, ex1.observe(ex1.x0, 0.0))
    _, r, done = ep.step(np.array([0.0]))
    # First step cost is L(x0, 0) * dt = 50 * 0.01.
    assert r == pytest.approx(-0.5)
    assert not done


@pytest.mark.property_suite
def test_episode_return_matches_rollout_cost(ex2, rng):
    env = ex2
    n = env.horizon_steps
    u_seq = rng.uniform(-10.0, 10.0, size=(n, 1))
    ep = Episode(env)
    ep.reset()
    ret = 0.0
    for k in range(n):
        _, r, done = ep.step(u_seq[k])
        ret += r
    assert done
    traj = rollout_open_loop(env.system, env.x0, u_seq, env.integrator)
    assert -ret == pytest.approx(traj.total_cost, rel=1e-12, abs=1e-10)


@pytest.mark.property_suite
@given(scale=st.floats(-1.0, 1.0), seed=st.integers(0, 2**16))
def test_return_cost_identity_property(scale, seed):
    # The negated episode return reproduces the rollout cost bit-for-bit
    # for any control sequence the two share.
    env = _A2_ENV
    n = env.horizon_steps
    u_seq = np.full((n, 1), 50.0 * scale)
    rng = np.random.default_rng(seed)
    u_seq += rng.normal(0.0, 1.0, size=u_seq.shape)
    ep = Episode(env)
    ep.reset()
    ret = 0.0
    for k in range(n):
        _, r, _ = ep.step(u_seq[k])
        ret += r
    traj = rollout_open_loop(env.system, env.x0, u_seq, env.integrator)
    assert -ret == pytest.approx(traj.total_cost, rel=1e-12, abs=1e-10)


def test_episode_refuses_steps_after_done(analytic1):
    ep = Episode(analytic1)
    ep.reset()
    for _ in range(analytic1.horizon_steps):
        _, _, done = ep.step(np.array([0.0]))
    assert done
    with pytest.raises(RuntimeError):
        ep.step(np.array([0.0]))


def test_greedy_rollout_equals_manual_loop(analytic2):
    def policy(x, t):
        return np.array([-5.0 * x[0]])

    traj = greedy_rollout(analytic2, policy)
    ep = Episode(analytic2)
    ep.reset()
    ret = 0.0
    for _ in range(analytic2.horizon_steps):
        u = policy(ep.x, 0.0)
        _, r, _ = ep.step(u)
        ret += r
    assert traj.total_cost == pytest.approx(-ret, rel=1e-12)
    assert traj.states.shape == (analytic2.horizon_steps + 1, 1)


def test_env_grid_modes_cover_plane(ex3, rng):
    X = rng.uniform(-3.0, 12.0, size=(500, 2))
    for x in X:
        mid = classify(ex3.system, x)
        assert 1 <= mid <= 7


def test_envs_use_chatter_policy():
    for name in ENV_MAKERS:
        env = make_env(name)
        assert env.integrator.on_zeno == "chatter"


def test_env_config_validation(analytic1):
    with pytest.raises(ValueError, match="multiple of dt"):
        EnvConfig(
            name="bad",
            system=analytic1.system,
            x0=analytic1.x0,
            obs_scale=analytic1.obs_scale,
            integrator=IntegratorConfig(dt=0.3),
        )


def test_make_env_dt_override():
    env = make_env("ex1", dt=0.005)
    assert env.integrator.dt == 0.005
    assert env.horizon_steps == 400


def test_boundary_segments_returns_drawable_lines(ex1):
    segs = boundary_segments(ex1, ((-12.0, -12.0), (4.0, 4.0)))
    assert segs
    for name, pts in segs:
        pts = np.asarray(pts)
        assert pts.shape == (2, 2)
        assert np.all(np.isfinite(pts))


_A2_ENV = make_env("analytic2")

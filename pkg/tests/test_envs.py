import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dipo.envs import GOALS, ConstantChain, MultiGoalEnv, QuadraticBandit, make_env
from dipo.mathcore import Rng

ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


def _at(env, s):
    env.reset()
    env.state = np.asarray(s, dtype=np.float64)
    return env


def test_step_from_origin_without_moving():
    res = _at(MultiGoalEnv(), [0.0, 0.0]).step([0.0, 0.0])
    assert res.r == pytest.approx(-25.0, abs=1e-12)
    assert not res.done and res.info is None


def test_step_reaching_a_goal():
    # s' = (0, 5.2): -0.1 * 1 - 0.2^2 + 10
    res = _at(MultiGoalEnv(), [0.0, 4.2]).step([0.0, 1.0])
    assert res.r == pytest.approx(9.86, abs=1e-12)
    assert res.done and res.info == 0
    np.testing.assert_allclose(res.s_next, [0.0, 5.2])


def test_actions_and_states_are_clipped():
    env = _at(MultiGoalEnv(), [6.5, 0.0])
    res = env.step([3.0, 0.0])
    np.testing.assert_array_equal(res.s_next, [7.0, 0.0])
    assert res.r == pytest.approx(-0.1 * 1.0 - 4.0)
    with pytest.raises(ValueError):
        env.step([np.nan, 0.0])


def test_max_episode_steps():
    env = MultiGoalEnv(Rng(0), max_episode_steps=3)
    env.reset()
    done = [env.step([0.0, 0.0]).done for _ in range(3)]
    assert done == [False, False, True]


@settings(max_examples=100, deadline=None)
@given(
    s=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    a=st.lists(st.floats(-1, 1), min_size=2, max_size=2),
)
def test_rotation_symmetry(s, a):
    s, a = np.array(s), np.array(a)
    base = _at(MultiGoalEnv(), s).step(a)
    rot = _at(MultiGoalEnv(), ROT90 @ s).step(ROT90 @ a)
    np.testing.assert_allclose(rot.s_next, ROT90 @ base.s_next, atol=1e-12)
    assert rot.r == pytest.approx(base.r, abs=1e-9)
    assert rot.done == base.done


@settings(max_examples=100, deadline=None)
@given(
    s=st.lists(st.floats(-7, 7), min_size=2, max_size=2),
    a=st.lists(st.floats(-1, 1), min_size=2, max_size=2),
)
def test_reward_recomputes_from_transition(s, a):
    env = _at(MultiGoalEnv(), s)
    res = env.step(a)
    d = np.linalg.norm(GOALS - res.s_next, axis=1).min()
    expected = -0.1 * float(np.dot(a, a)) - d**2 + (10.0 if d <= 0.5 else 0.0)
    assert res.r == pytest.approx(expected, abs=1e-9)


def test_reset_distribution():
    env = MultiGoalEnv(Rng(3))
    x = np.array([env.reset() for _ in range(20_000)])
    # N(0, 0.25 I): sd of the mean is 0.0035, of the variance ~0.0025
    assert np.all(np.abs(x.mean(axis=0)) < 0.015)
    assert np.all(np.abs(x.var(axis=0) - 0.25) < 0.015)
    assert np.all(np.abs(x) <= 3.0)


def test_env_state_roundtrip():
    env = MultiGoalEnv(Rng(1))
    env.reset()
    env.step([0.3, -0.2])
    st_ = env.get_state()
    nxt = [env.step([0.1, 0.1]).r, env.reset().tolist()]
    other = MultiGoalEnv(Rng(99))
    other.set_state(st_)
    assert [other.step([0.1, 0.1]).r, other.reset().tolist()] == nxt


def test_bandit_and_chain():
    b = QuadraticBandit([0.5, -0.3])
    b.reset()
    res = b.step([0.5, 0.7])
    assert res.r == pytest.approx(-1.0) and res.done
    with pytest.raises(ValueError):
        QuadraticBandit([2.0, 0.0])
    c = ConstantChain(max_episode_steps=2)
    c.reset()
    r1, r2 = c.step([0.0]), c.step([0.0])
    assert r1.r == r2.r == 1.0 and not r1.done and not r2.done
    assert not r1.truncated and r2.truncated


def test_make_env():
    assert isinstance(make_env("multigoal", Rng(0), reach_radius=0.3), MultiGoalEnv)
    assert make_env("bandit", Rng(0)).spec.action_dim == 2
    with pytest.raises(ValueError):
        make_env("nope", Rng(0))

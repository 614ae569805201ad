import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dipo.envs import MultiGoalEnv, QuadraticBandit
from dipo.mathcore import Rng
from dipo.rl import (
    DipoConfig,
    ReplayBuffer,
    Transition,
    VecEnv,
    act,
    action_gradient_pass,
    critic_update,
    improve_actions,
    make_agent,
    mlp_baseline_update,
    policy_update,
    soft_update,
    td_targets,
    train,
)

SMALL = dict(hidden_sizes=(16, 16), K=10, batch_size=32, n_envs=2, rollout_steps=5,
             updates_per_round=2, action_grad_steps=2, buffer_capacity=1000)


def _tr(i, done=False, dim=2):
    return Transition(np.full(dim, float(i)), np.full(dim, 0.1 * i), np.full(dim, i + 0.5), float(i), done)


def _filled_buffer(n=64, seed=0, done_every=4):
    rng = Rng(seed)
    buf = ReplayBuffer(1000, 2, 2)
    for i in range(n):
        s = rng.normal(1, 2)[0]
        buf.push(Transition(s, np.tanh(rng.normal(1, 2)[0]), s + 0.1, float(rng.normal(1, 1)[0, 0]),
                            i % done_every == 0))
    return buf


def _agent(kind="diffusion", seed=0, **kw):
    return make_agent(MultiGoalEnv().spec, DipoConfig(**{**SMALL, **kw}), kind, seed=seed)


class QuadraticCritic:
    """Injected analytic critic ``Q(s, a) = -||a - a*||^2``."""

    def __init__(self, a_star):
        self.a_star = np.asarray(a_star, dtype=np.float64)

    def min_q_and_grad(self, s, a):
        d = self.a_star - a
        return -np.sum(d * d, axis=1), 2.0 * d


# ------------------------------------------------------------------ buffer

def test_buffer_ring_eviction():
    buf = ReplayBuffer(2, 2, 2)
    for i in range(3):
        buf.push(_tr(i))
    assert len(buf) == 2
    assert sorted(buf.r[:2].tolist()) == [1.0, 2.0]


@pytest.mark.parametrize("n", [0, 1, 5, 9])
def test_buffer_size(n):
    buf = ReplayBuffer(5, 2, 2)
    for i in range(n):
        buf.push(_tr(i))
    assert buf.size == min(n, 5)


def test_buffer_sample_only_stored():
    buf = ReplayBuffer(10, 2, 2)
    for i in range(3):
        buf.push(_tr(i))
    b = buf.sample(200, Rng(0))
    assert set(b.r.tolist()) <= {0.0, 1.0, 2.0}
    assert np.all(b.idx < 3)


def test_buffer_errors():
    buf = ReplayBuffer(4, 2, 2)
    with pytest.raises(ValueError):
        buf.sample(1, Rng(0))
    with pytest.raises(ValueError):
        buf.push(_tr(0, dim=3))
    with pytest.raises(ValueError):
        buf.push(Transition(np.zeros(2), np.zeros(2), np.zeros(2), float("inf"), False))


# ------------------------------------------------------------------ critic

def test_done_rows_target_reward_exactly():
    agent = _agent()
    buf = _filled_buffer(done_every=1)
    b = buf.sample(32, agent.rng)
    y, boot = td_targets(agent, b)
    np.testing.assert_array_equal(y, b.r)
    assert np.all(boot == 0.0)


def test_bootstrap_is_min_of_target_critics():
    agent = _agent()
    b = _filled_buffer().sample(32, Rng(1))
    state = agent.rng.get_state()
    _, boot = td_targets(agent, b)
    agent.rng.set_state(state)
    live = b.done < 0.5
    a_next = act(agent, b.s_next[live], explore=True)
    expected = agent.critic.target_min(b.s_next[live], a_next)
    np.testing.assert_array_equal(boot[live], expected)
    assert np.all(boot[~live] == 0.0)


def test_critic_loss_zero_at_exact_targets():
    agent = _agent()
    buf = ReplayBuffer(10, 2, 2)
    for _ in range(4):
        buf.push(Transition(np.zeros(2), np.zeros(2), np.zeros(2), 2.5, True))
    for q in (agent.critic.q1, agent.critic.q2):
        q.params[-2][...] = 0.0
        q.params[-1][...] = 2.5
    assert critic_update(agent, buf.sample(8, agent.rng)) == 0.0


def test_critic_update_leaves_targets():
    agent = _agent()
    before = [p.copy() for p in agent.critic.q1_target.params]
    critic_update(agent, _filled_buffer().sample(32, agent.rng))
    assert all(np.array_equal(p, q) for p, q in zip(before, agent.critic.q1_target.params))


# --------------------------------------------------------- action gradient

def test_quadratic_critic_single_step():
    new, _ = improve_actions(QuadraticCritic([1.0, 0.0]), np.zeros((1, 1)), np.zeros((1, 2)), 0.25, 10.0,
                             -np.ones(2), np.ones(2))
    np.testing.assert_allclose(new, [[0.5, 0.0]], atol=1e-15)


def test_quadratic_critic_converges():
    critic = QuadraticCritic([1.0, 0.0])
    a = np.zeros((1, 2))
    for _ in range(50):
        a, _ = improve_actions(critic, np.zeros((1, 1)), a, 0.25, 10.0, -np.ones(2), np.ones(2))
    assert np.linalg.norm(a - [1.0, 0.0]) < 1e-3


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), ratio=st.floats(1e-3, 1.0), eta=st.floats(1e-3, 10.0))
def test_action_step_respects_clip(seed, ratio, eta):
    agent = _agent(seed=seed % 7, action_grad_norm_ratio=ratio, action_lr=eta)
    buf = _filled_buffer(seed=seed)
    before = buf.a.copy()
    action_gradient_pass(agent, buf, np.arange(buf.size))
    step = np.linalg.norm(buf.a - before, axis=1)
    assert np.all(step <= ratio * agent.spec.action_diameter + 1e-12)
    assert np.all(np.abs(buf.a[: buf.size]) <= 1.0)


def test_action_gradient_monotone_under_concave_critic():
    rng = Rng(4)
    critic = QuadraticCritic([0.7, -0.4])
    a = rng.uniform(-1, 1, (50, 2))
    s = np.zeros((50, 1))
    q_prev, _ = critic.min_q_and_grad(s, a)
    for _ in range(30):
        a, _ = improve_actions(critic, s, a, 0.1, 0.05, -np.ones(2), np.ones(2))
        q, _ = critic.min_q_and_grad(s, a)
        assert np.all(q >= q_prev)
        q_prev = q


def test_action_gradient_only_touches_actions():
    agent = _agent()
    buf = _filled_buffer()
    snap = {k: v.copy() for k, v in buf.arrays().items()}
    n = action_gradient_pass(agent, buf, np.arange(buf.size))
    assert n == buf.size
    for k in ("s", "a_env", "s_next", "r", "done"):
        assert np.array_equal(snap[k], buf.arrays()[k])
    assert not np.array_equal(snap["a"], buf.arrays()["a"])


# ------------------------------------------------------------- soft update

def _set_all(agent, online, target):
    for name, m in agent.models().items():
        for p in m.params:
            p[...] = target if name.endswith("target") else online


@pytest.mark.parametrize("rho,expected", [(0.0, 1.0), (1.0, 0.0), (0.005, 0.995)])
def test_soft_update_cases(rho, expected):
    agent = _agent()
    _set_all(agent, 1.0, 0.0)
    soft_update(agent, rho)
    for name, m in agent.models().items():
        if name.endswith("target"):
            assert all(np.allclose(p, expected, rtol=0, atol=1e-15) for p in m.params)


def test_soft_update_repeated_closed_form():
    agent = _agent()
    _set_all(agent, 1.0, -2.0)
    rho = 0.7
    for _ in range(3):
        soft_update(agent, rho)
    expected = rho**3 * -2.0 + (1 - rho**3) * 1.0
    for name, m in agent.models().items():
        if name.endswith("target"):
            assert all(np.max(np.abs(p - expected)) < 1e-12 for p in m.params)


def test_soft_update_default_uses_tau():
    agent = _agent(tau=0.25)
    _set_all(agent, 1.0, 0.0)
    soft_update(agent)
    assert np.allclose(agent.critic.q1_target.params[0], 0.25)


# ------------------------------------------------------------------ policy

def _single_pair_buffer(a_star, n=64):
    buf = ReplayBuffer(n, 2, 2)
    for _ in range(n):
        buf.push(Transition(np.array([0.5, -0.5]), np.asarray(a_star), np.zeros(2), 0.0, True))
    return buf


def test_policy_fits_single_pair():
    a_star = np.array([0.6, -0.3])
    agent = _agent(hidden_sizes=(32, 32), K=20, actor_lr=3e-3)
    buf = _single_pair_buffer(a_star)
    policy_update(agent, buf, 1500)
    draws = agent.policy.sample(np.tile([0.5, -0.5], (1000, 1)), Rng(9))
    assert np.linalg.norm(draws.mean(axis=0) - a_star) < 0.1


def test_policy_loss_decreases():
    agent = _agent(hidden_sizes=(32, 32), actor_lr=1e-3)
    buf = _filled_buffer(256)
    losses = [policy_update(agent, buf, 1) for _ in range(400)]
    assert np.mean(losses[-40:]) < np.mean(losses[:40])


def test_zero_policy_updates():
    agent = _agent()
    before = [p.copy() for p in agent.policy.net.model.params]
    assert np.isnan(policy_update(agent, _filled_buffer(), 0))
    assert all(np.array_equal(p, q) for p, q in zip(before, agent.policy.net.model.params))
    with pytest.raises(ValueError):
        policy_update(agent, ReplayBuffer(4, 2, 2), 1)


def test_baseline_regression_single_pair():
    a_star = np.array([0.6, -0.3])
    agent = _agent("mlp", actor_lr=3e-3)
    loss = mlp_baseline_update(agent.policy, _single_pair_buffer(a_star), 800, Rng(2), batch_size=32)
    out = agent.policy.sample(np.array([[0.5, -0.5]]), Rng(0), explore=False)
    assert np.linalg.norm(out[0] - a_star) < 0.05
    assert loss > 0


def test_baseline_loss_zero_when_interpolating():
    a_star = np.array([0.6, -0.3])
    agent = _agent("mlp")
    agent.policy.model.params[-2][...] = 0.0
    agent.policy.model.params[-1][...] = a_star
    assert mlp_baseline_update(agent.policy, _single_pair_buffer(a_star), 3, Rng(0), 16) == 0.0


# ------------------------------------------------------------------ train

def _run(kind="diffusion", rounds=3, seed=5):
    agent = _agent(kind, seed=seed)
    venv = VecEnv.create(MultiGoalEnv, agent.config.n_envs, Rng(seed + 100))
    return agent, train(agent, venv, rounds)


def _rows_repr(rows):
    return [repr(sorted(r.items())) for r in rows]


def test_train_deterministic():
    _, a = _run()
    _, b = _run()
    assert _rows_repr(a) == _rows_repr(b)
    assert [r["round"] for r in a] == [1, 2, 3]
    assert a[-1]["env_steps"] == 3 * SMALL["n_envs"] * SMALL["rollout_steps"]


def test_train_zero_rounds():
    agent, rows = _run(rounds=0)
    fresh = _agent(seed=5)
    assert rows == []
    for name, m in agent.models().items():
        assert all(np.array_equal(p, q) for p, q in zip(m.params, fresh.models()[name].params))


def test_train_with_baseline_policy():
    _, rows = _run("mlp", rounds=2)
    assert len(rows) == 2 and np.isfinite(rows[-1]["critic_loss"])


def test_train_rejects_mismatched_env():
    agent = _agent()
    venv = VecEnv.create(lambda r: QuadraticBandit([0.1], rng=r), 1, Rng(0))
    with pytest.raises(ValueError):
        train(agent, venv, 1)


def test_warmup_actions_are_uniform_in_box():
    agent = _agent(warmup_steps=1000)
    venv = VecEnv.create(MultiGoalEnv, 2, Rng(0))
    buf = ReplayBuffer(1000, 2, 2)
    train(agent, venv, 2, buf=buf)
    a = buf.a_env[: buf.size]
    assert np.all(np.abs(a) <= 1.0) and a.std() > 0.4

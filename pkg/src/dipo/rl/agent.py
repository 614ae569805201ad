"""DIPO agent state and its update operations."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..envs import EnvSpec
from ..mathcore import (
    MlpModel,
    Rng,
    adam_step,
    clip_grad_norm,
    init_mlp,
    mlp_apply,
    mlp_backward,
    mlp_forward,
    soft_update_params,
)
from .buffer import Batch, ReplayBuffer
from .policies import DiffusionPolicy, MlpPolicy


@dataclass
class DipoConfig:
    gamma: float = 0.99
    tau: float = 0.005  # target smoothing; soft updates use rho = 1 - tau
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    action_lr: float = 0.03
    action_grad_steps: int = 20
    batch_size: int = 256
    K: int = 100
    hidden_sizes: tuple[int, ...] = (256, 256)
    embed_dim: int = 32
    grad_norm: float = 2.0
    action_grad_norm_ratio: float = 0.1
    updates_per_round: int = 20
    buffer_capacity: int = 1_000_000
    rollout_steps: int = 30
    n_envs: int = 8
    explore_noise: float = 0.1  # regression baseline only
    warmup_steps: int = 0  # env steps played with uniform random actions before the policy takes over

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 <= self.tau < 1.0:
            raise ValueError(f"tau must lie in [0, 1), got {self.tau}")
        for name in ("actor_lr", "critic_lr", "action_lr", "grad_norm", "action_grad_norm_ratio"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.explore_noise < 0:
            raise ValueError("explore_noise must be non-negative")
        for name in ("batch_size", "K", "buffer_capacity", "rollout_steps", "n_envs", "embed_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        for name in ("action_grad_steps", "updates_per_round", "warmup_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.embed_dim % 2:
            raise ValueError("embed_dim must be even")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("hidden_sizes must be a non-empty list of positive sizes")

    @property
    def rho(self) -> float:
        return 1.0 - self.tau

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class Critic:
    """Twin Q networks ``(s, a) -> scalar`` and their targets."""

    q1: MlpModel
    q2: MlpModel
    q1_target: MlpModel
    q2_target: MlpModel
    state_dim: int

    @classmethod
    def create(cls, state_dim: int, action_dim: int, hidden_sizes, rng: Rng) -> "Critic":
        sizes = [state_dim + action_dim, *hidden_sizes, 1]
        q1, q2 = init_mlp(sizes, rng), init_mlp(sizes, rng)
        return cls(q1, q2, q1.copy(), q2.copy(), state_dim)

    def target_min(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        x = np.concatenate([s, a], axis=1)
        return np.minimum(mlp_apply(self.q1_target, x), mlp_apply(self.q2_target, x))[:, 0]

    def min_q_and_grad(self, s: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``min(Q1, Q2)`` at ``(s, a)`` and its gradient with respect to ``a``."""
        x = np.concatenate([s, a], axis=1)
        o1, t1 = mlp_forward(self.q1, x)
        o2, t2 = mlp_forward(self.q2, x)
        pick1 = o1[:, 0] <= o2[:, 0]
        _, g1 = mlp_backward(self.q1, t1, pick1[:, None].astype(np.float64))
        _, g2 = mlp_backward(self.q2, t2, (~pick1)[:, None].astype(np.float64))
        grad = (g1 + g2)[:, self.state_dim:]
        return np.where(pick1, o1[:, 0], o2[:, 0]), grad

    def models(self) -> dict[str, MlpModel]:
        return {"q1": self.q1, "q2": self.q2, "q1_target": self.q1_target, "q2_target": self.q2_target}

    def soft_update(self, rho: float) -> None:
        soft_update_params(self.q1_target, self.q1, rho)
        soft_update_params(self.q2_target, self.q2, rho)


@dataclass
class DipoAgent:
    policy: DiffusionPolicy | MlpPolicy
    critic: Critic
    config: DipoConfig
    spec: EnvSpec
    rng: Rng
    stats: dict = field(default_factory=dict)
    recent: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def clamp(self, a: np.ndarray) -> np.ndarray:
        return np.clip(a, self.spec.action_low, self.spec.action_high)

    def models(self) -> dict[str, MlpModel]:
        return {**self.policy.models(), **self.critic.models()}


def make_agent(spec: EnvSpec, config: DipoConfig, policy_kind: str = "diffusion", seed: int = 0) -> DipoAgent:
    rng = Rng(seed)
    init_rng, run_rng = rng.spawn(2)
    if policy_kind == "diffusion":
        policy = DiffusionPolicy(spec.state_dim, spec.action_dim, config.K, config.hidden_sizes, init_rng,
                                 config.actor_lr, config.grad_norm, config.embed_dim)
    elif policy_kind == "mlp":
        policy = MlpPolicy(spec.state_dim, spec.action_dim, config.hidden_sizes, init_rng,
                           config.actor_lr, config.grad_norm, config.explore_noise)
    else:
        raise ValueError(f"unknown policy kind {policy_kind!r}")
    critic = Critic.create(spec.state_dim, spec.action_dim, config.hidden_sizes, init_rng)
    return DipoAgent(policy, critic, config, spec, run_rng)


# ------------------------------------------------------------------ operations

def act(agent: DipoAgent, s: np.ndarray, explore: bool = True) -> np.ndarray:
    """Sample actions for a batch of states, clamped to the action box.

    ``explore=False`` samples from the target policy (used for evaluation).
    """
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    a = agent.policy.sample(s, agent.rng, target=not explore, explore=explore)
    return agent.clamp(a)


def td_targets(agent: DipoAgent, batch: Batch) -> tuple[np.ndarray, np.ndarray]:
    """Bellman targets ``r + gamma (1 - done) min_i Q'_i(s', a')`` and the bootstrap term.

    ``a'`` is drawn from the current online policy; terminal rows skip it.
    """
    boot = np.zeros(len(batch))
    live = batch.done < 0.5
    if np.any(live):
        s_next = batch.s_next[live]
        a_next = act(agent, s_next, explore=True)
        boot[live] = agent.critic.target_min(s_next, a_next)
    y = batch.r + agent.config.gamma * (1.0 - batch.done) * boot
    return y, boot


def critic_update(agent: DipoAgent, batch: Batch) -> float:
    """One Adam step for each online critic on the squared TD residual.

    Critics regress on the action that was actually played. Target networks
    are left untouched. Returns the mean of the two critic losses.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    y, _ = td_targets(agent, batch)
    x = np.concatenate([batch.s, batch.a_env], axis=1)
    n = len(batch)
    total = 0.0
    for q in (agent.critic.q1, agent.critic.q2):
        out, tape = mlp_forward(q, x)
        resid = out[:, 0] - y
        loss = float(resid @ resid) / n
        if not np.isfinite(loss):
            raise FloatingPointError("critic loss is not finite")
        grads, _ = mlp_backward(q, tape, (2.0 * resid / n)[:, None])
        clip_grad_norm(grads, agent.config.grad_norm)
        adam_step(q, grads, agent.config.critic_lr)
        total += loss
    return total / 2


def improve_actions(critic, s: np.ndarray, a: np.ndarray, eta: float, max_step: float,
                    low: np.ndarray, high: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``a + eta * grad_a min_i Q_i(s, a)`` with the step norm capped, clamped to the box.

    Returns the new actions and the per-row norm of the applied step.
    """
    _, grad = critic.min_q_and_grad(s, a)
    step = eta * grad
    norm = np.linalg.norm(step, axis=1)
    over = norm > max_step
    step[over] *= (max_step / norm[over])[:, None]
    new = np.clip(a + step, low, high)
    return new, np.linalg.norm(new - a, axis=1)


def default_action_indices(agent: DipoAgent, buf: ReplayBuffer) -> np.ndarray:
    sampled = buf.sample_indices(agent.config.batch_size, agent.rng)
    return np.union1d(agent.recent[agent.recent < buf.size], sampled)


def action_gradient_pass(agent: DipoAgent, buf: ReplayBuffer, indices: np.ndarray | None = None) -> int:
    """Rewrite stored actions one gradient-ascent step uphill on the critic.

    By default touches the latest rollout plus ``batch_size`` uniformly drawn
    slots.  Returns the number of actions updated; the mean step norm is left
    in ``agent.stats["action_grad_norm"]``.
    """
    if buf.size == 0:
        agent.stats["action_grad_norm"] = 0.0
        return 0
    idx = default_action_indices(agent, buf) if indices is None else np.unique(np.asarray(indices))
    cfg = agent.config
    max_step = cfg.action_grad_norm_ratio * agent.spec.action_diameter
    new, norms = improve_actions(agent.critic, buf.s[idx], buf.a[idx], cfg.action_lr, max_step,
                                 agent.spec.action_low, agent.spec.action_high)
    buf.set_actions(idx, new)
    agent.stats["action_grad_norm"] = float(norms.mean())
    return int(idx.size)


def policy_update(agent: DipoAgent, buf: ReplayBuffer, n_updates: int) -> float:
    """``n_updates`` policy fitting steps on minibatches of (state, improved action)."""
    if buf.size == 0:
        raise ValueError("cannot update the policy from an empty buffer")
    losses = []
    for _ in range(n_updates):
        b = buf.sample(agent.config.batch_size, agent.rng)
        losses.append(agent.policy.fit_step(b.s, b.a, agent.rng))
    return float(np.mean(losses)) if losses else float("nan")


def mlp_baseline_update(policy: MlpPolicy, buf: ReplayBuffer, n_updates: int, rng: Rng,
                        batch_size: int = 256) -> float:
    """Regress the deterministic baseline on buffered actions; returns the mean loss."""
    if buf.size == 0:
        raise ValueError("cannot update the policy from an empty buffer")
    losses = [policy.fit_step(b.s, b.a, rng) for b in (buf.sample(batch_size, rng) for _ in range(n_updates))]
    return float(np.mean(losses)) if losses else float("nan")


def soft_update(agent: DipoAgent, rho: float | None = None) -> None:
    """``p' <- rho p' + (1 - rho) p`` for both critics and the policy target."""
    rho = agent.config.rho if rho is None else rho
    agent.critic.soft_update(rho)
    agent.policy.soft_update(rho)

"""The DIPO round: rollout, critic fitting, action improvement, policy fitting, soft update."""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from ..mathcore import Rng
from .agent import (
    DipoAgent,
    act,
    action_gradient_pass,
    critic_update,
    policy_update,
    soft_update,
)
from .buffer import ReplayBuffer, Transition

METRIC_FIELDS = (
    "round",
    "env_steps",
    "episode_return_mean",
    "episode_return_std",
    "critic_loss",
    "dsm_loss",
    "action_grad_norm",
    "goals_reached_frac",
    "per_goal_fractions",
)


class VecEnv:
    """A fixed set of environment copies stepped in lockstep.

    Finished episodes are reset immediately; completed-episode statistics are
    collected until :meth:`drain` is called.
    """

    def __init__(self, envs: list):
        if not envs:
            raise ValueError("need at least one environment")
        self.envs = envs
        self.spec = envs[0].spec
        self.states = np.stack([e.reset() for e in envs])
        self.returns = np.zeros(len(envs))
        self.finished: list[tuple[float, int | None]] = []
        self.total_steps = 0

    @classmethod
    def create(cls, make_env: Callable[[Rng], object], n: int, rng: Rng) -> "VecEnv":
        return cls([make_env(r) for r in rng.spawn(n)])

    def __len__(self) -> int:
        return len(self.envs)

    def step(self, actions: np.ndarray) -> list[Transition]:
        out = []
        for i, env in enumerate(self.envs):
            res = env.step(actions[i])
            out.append(Transition(self.states[i].copy(), actions[i].copy(), res.s_next, res.r, res.done))
            self.returns[i] += res.r
            self.total_steps += 1
            if res.done or getattr(res, "truncated", False):
                self.finished.append((float(self.returns[i]), res.info))
                self.returns[i] = 0.0
                self.states[i] = env.reset()
            else:
                self.states[i] = res.s_next
        return out

    def drain(self) -> list[tuple[float, int | None]]:
        done, self.finished = self.finished, []
        return done

    def get_state(self) -> dict:
        return {
            "envs": [e.get_state() for e in self.envs],
            "states": self.states.tolist(),
            "returns": self.returns.tolist(),
            "finished": [[r, g] for r, g in self.finished],
            "total_steps": self.total_steps,
        }

    def set_state(self, st: dict) -> None:
        for e, s in zip(self.envs, st["envs"]):
            e.set_state(s)
        self.states = np.asarray(st["states"], dtype=np.float64).reshape(self.states.shape)
        self.returns = np.asarray(st["returns"], dtype=np.float64)
        self.finished = [(float(r), None if g is None else int(g)) for r, g in st["finished"]]
        self.total_steps = int(st["total_steps"])


def episode_summary(episodes: list[tuple[float, int | None]], n_goals: int = 4) -> dict:
    """Return statistics, reach fraction, and each goal's share of the reaches."""
    rets = np.array([r for r, _ in episodes], dtype=np.float64)
    goals = [g for _, g in episodes if g is not None]
    counts = np.bincount(np.asarray(goals, dtype=np.int64), minlength=n_goals)[:n_goals] if goals else np.zeros(n_goals)
    return {
        "episodes": len(episodes),
        "return_mean": float(rets.mean()) if rets.size else float("nan"),
        "return_std": float(rets.std()) if rets.size else float("nan"),
        "goals_reached_frac": len(goals) / len(episodes) if episodes else float("nan"),
        "per_goal_fractions": [float(c) / len(goals) if goals else 0.0 for c in counts],
    }


def run_round(agent: DipoAgent, venv: VecEnv, buf: ReplayBuffer) -> dict:
    cfg = agent.config
    recent = []
    for _ in range(cfg.rollout_steps):
        if venv.total_steps < cfg.warmup_steps:
            actions = agent.rng.uniform(agent.spec.action_low, agent.spec.action_high, venv.states.shape[:1] + agent.spec.action_low.shape)
        else:
            actions = act(agent, venv.states, explore=True)
        for t in venv.step(actions):
            recent.append(buf.push(t))
    agent.recent = np.asarray(recent, dtype=np.int64)

    critic_losses = [critic_update(agent, buf.sample(cfg.batch_size, agent.rng)) for _ in range(cfg.updates_per_round)]

    step_norms = []
    for _ in range(cfg.action_grad_steps):
        action_gradient_pass(agent, buf)
        step_norms.append(agent.stats["action_grad_norm"])

    dsm = policy_update(agent, buf, cfg.updates_per_round)
    # equivalent to one soft update per gradient step, applied once per round
    soft_update(agent, cfg.rho ** max(cfg.updates_per_round, 1))

    summ = episode_summary(venv.drain())
    return {
        "env_steps": venv.total_steps,
        "episode_return_mean": summ["return_mean"],
        "episode_return_std": summ["return_std"],
        "critic_loss": float(np.mean(critic_losses)) if critic_losses else float("nan"),
        "dsm_loss": dsm,
        "action_grad_norm": float(np.mean(step_norms)) if step_norms else 0.0,
        "goals_reached_frac": summ["goals_reached_frac"],
        "per_goal_fractions": summ["per_goal_fractions"],
    }


def train(
    agent: DipoAgent,
    venv: VecEnv,
    rounds: int,
    buf: ReplayBuffer | None = None,
    callbacks: Iterable[Callable[[int, dict], None]] = (),
    start_round: int = 0,
) -> list[dict]:
    """Run ``rounds`` DIPO rounds; returns one metrics row per round.

    Callbacks receive ``(round_number, row)`` after each round.
    """
    if venv.spec.state_dim != agent.spec.state_dim or venv.spec.action_dim != agent.spec.action_dim:
        raise ValueError("environment and agent dimensions disagree")
    if buf is None:
        buf = ReplayBuffer(agent.config.buffer_capacity, agent.spec.state_dim, agent.spec.action_dim)
    rows = []
    for i in range(start_round, start_round + rounds):
        row = {"round": i + 1, **run_round(agent, venv, buf)}
        rows.append(row)
        for cb in callbacks:
            cb(i + 1, row)
    return rows


def evaluate(agent: DipoAgent, make_env: Callable[[Rng], object], episodes: int, seed: int = 0) -> dict:
    """Roll out ``episodes`` full episodes in parallel with the target policy.

    Uses its own random streams, so evaluation never perturbs training.
    """
    rng = Rng(seed)
    envs = [make_env(r) for r in rng.spawn(episodes)]
    states = np.stack([e.reset() for e in envs])
    returns = np.zeros(episodes)
    goal: list[int | None] = [None] * episodes
    alive = np.ones(episodes, dtype=bool)
    saved_rng, agent.rng = agent.rng, rng
    try:
        while alive.any():
            idx = np.flatnonzero(alive)
            actions = act(agent, states[idx], explore=False)
            for j, i in enumerate(idx):
                res = envs[i].step(actions[j])
                returns[i] += res.r
                states[i] = res.s_next
                if res.done or getattr(res, "truncated", False):
                    alive[i] = False
                    goal[i] = res.info
    finally:
        agent.rng = saved_rng
    return episode_summary(list(zip(returns.tolist(), goal)))

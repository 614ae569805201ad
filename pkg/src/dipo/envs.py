"""Environments: the four-goal 2D point mass and two analytic diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .mathcore import Rng

GOALS = np.array([[0.0, 5.0], [0.0, -5.0], [5.0, 0.0], [-5.0, 0.0]])


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_episode_steps: int

    def __post_init__(self):
        if not np.all(np.asarray(self.action_low) < np.asarray(self.action_high)):
            raise ValueError("action_low must be below action_high elementwise")

    @property
    def action_diameter(self) -> float:
        return float(np.linalg.norm(np.asarray(self.action_high) - np.asarray(self.action_low)))


@dataclass
class StepResult:
    s_next: np.ndarray
    r: float
    done: bool
    info: int | None = None  # index of the goal reached, if any


class MultiGoalEnv:
    """Point mass on ``[-7, 7]^2`` with four goals at distance 5 from the origin.

    ``s' = clip(s + clip(a, -1, 1))``; reward is
    ``-r1_coeff ||a||^2 - min_g ||s' - g||^2 + 10 * [reached]``.  An episode ends
    when a goal is within ``reach_radius`` or after ``max_episode_steps``.
    """

    name = "multigoal"

    def __init__(
        self,
        rng: Rng | None = None,
        r1_coeff: float = 0.1,
        reach_radius: float = 0.5,
        max_episode_steps: int = 30,
        init_std: float = 0.5,
        init_box: float = 3.0,
        bound: float = 7.0,
        goal_reward: float = 10.0,
    ):
        self.rng = rng if rng is not None else Rng(0)
        self.goals = GOALS.copy()
        self.r1_coeff = r1_coeff
        self.reach_radius = reach_radius
        self.init_std = init_std
        self.init_box = init_box
        self.bound = bound
        self.goal_reward = goal_reward
        self.spec = EnvSpec(2, 2, -np.ones(2), np.ones(2), max_episode_steps)
        self.state = np.zeros(2)
        self.t = 0

    def reset(self) -> np.ndarray:
        s = self.init_std * self.rng.normal(1, 2)[0]
        self.state = np.clip(s, -self.init_box, self.init_box)
        self.t = 0
        return self.state.copy()

    def reward(self, a: np.ndarray, s_next: np.ndarray) -> tuple[float, int | None]:
        d = np.linalg.norm(self.goals - s_next, axis=1)
        g = int(np.argmin(d))
        reached = d[g] <= self.reach_radius
        r = -self.r1_coeff * float(a @ a) - float(d[g] ** 2) + (self.goal_reward if reached else 0.0)
        return r, (g if reached else None)

    def step(self, a) -> StepResult:
        a = np.asarray(a, dtype=np.float64).reshape(2)
        if np.any(np.isnan(a)):
            raise ValueError("NaN action")
        a = np.clip(a, self.spec.action_low, self.spec.action_high)
        s_next = np.clip(self.state + a, -self.bound, self.bound)
        r, goal = self.reward(a, s_next)
        self.state = s_next
        self.t += 1
        done = goal is not None or self.t >= self.spec.max_episode_steps
        return StepResult(s_next.copy(), r, done, goal)

    def get_state(self) -> dict[str, Any]:
        return {"state": self.state.tolist(), "t": self.t, "rng": self.rng.get_state()}

    def set_state(self, st: dict[str, Any]) -> None:
        self.state = np.asarray(st["state"], dtype=np.float64)
        self.t = int(st["t"])
        self.rng.set_state(st["rng"])


class QuadraticBandit:
    """One-step episodes with reward ``-||a - a*||^2`` and a constant state."""

    name = "bandit"

    def __init__(self, a_star, state_dim: int = 1, rng: Rng | None = None):
        self.a_star = np.asarray(a_star, dtype=np.float64).ravel()
        d = self.a_star.size
        self.spec = EnvSpec(state_dim, d, -np.ones(d), np.ones(d), 1)
        if np.any(self.a_star < self.spec.action_low) or np.any(self.a_star > self.spec.action_high):
            raise ValueError("a_star must lie inside the action box")
        self.rng = rng if rng is not None else Rng(0)
        self.state = np.zeros(state_dim)
        self.t = 0

    def reset(self) -> np.ndarray:
        self.t = 0
        return self.state.copy()

    def q_value(self, s, a) -> np.ndarray:
        """Optimal Q (episodes last one step, so it equals the reward)."""
        a = np.atleast_2d(a)
        return -np.sum((a - self.a_star) ** 2, axis=1)

    def step(self, a) -> StepResult:
        a = np.clip(np.asarray(a, dtype=np.float64).ravel(), self.spec.action_low, self.spec.action_high)
        r = -float(np.sum((a - self.a_star) ** 2))
        self.t = 1
        return StepResult(self.state.copy(), r, True, None)

    def get_state(self) -> dict[str, Any]:
        return {"t": self.t, "rng": self.rng.get_state()}

    def set_state(self, st: dict[str, Any]) -> None:
        self.t = int(st["t"])
        self.rng.set_state(st["rng"])


class ConstantChain:
    """A single absorbing state with constant reward; episodes never terminate.

    The true action value is ``reward / (1 - gamma)`` everywhere.  Episodes are
    truncated (not terminated) after ``max_episode_steps``.
    """

    name = "chain"

    def __init__(self, reward: float = 1.0, state_dim: int = 1, max_episode_steps: int = 100, rng: Rng | None = None):
        self.reward_value = reward
        self.spec = EnvSpec(state_dim, 1, -np.ones(1), np.ones(1), max_episode_steps)
        self.rng = rng if rng is not None else Rng(0)
        self.state = np.zeros(state_dim)
        self.t = 0

    def reset(self) -> np.ndarray:
        self.t = 0
        return self.state.copy()

    def step(self, a) -> StepResult:
        self.t += 1
        res = StepResult(self.state.copy(), self.reward_value, False, None)
        res.truncated = self.t >= self.spec.max_episode_steps  # type: ignore[attr-defined]
        return res

    def get_state(self) -> dict[str, Any]:
        return {"t": self.t, "rng": self.rng.get_state()}

    def set_state(self, st: dict[str, Any]) -> None:
        self.t = int(st["t"])
        self.rng.set_state(st["rng"])


def make_env(name: str, rng: Rng, **knobs):
    if name == "multigoal":
        return MultiGoalEnv(rng, **knobs)
    if name == "bandit":
        knobs.setdefault("a_star", [0.5, -0.3])
        return QuadraticBandit(rng=rng, **knobs)
    if name == "chain":
        return ConstantChain(rng=rng, **knobs)
    raise ValueError(f"unknown environment {name!r}")

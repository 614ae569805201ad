from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mathcore import Rng


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    r: float
    done: bool


@dataclass
class Batch:
    idx: np.ndarray
    s: np.ndarray
    a: np.ndarray  # policy-regression target (possibly improved)
    a_env: np.ndarray  # action that was actually played
    s_next: np.ndarray
    r: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return self.idx.size


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions.

    Each slot keeps two copies of the action: ``a_env`` is what the agent played
    and never changes; ``a`` starts equal to it and is rewritten in place by the
    action-gradient pass.
    """

    FIELDS = ("s", "a", "a_env", "s_next", "r", "done")

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.a_env = np.zeros((capacity, action_dim))
        self.s_next = np.zeros((capacity, state_dim))
        self.r = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> int:
        """Store one transition, evicting the oldest when full; returns its slot."""
        s = np.asarray(t.s, dtype=np.float64).ravel()
        a = np.asarray(t.a, dtype=np.float64).ravel()
        s_next = np.asarray(t.s_next, dtype=np.float64).ravel()
        if s.size != self.state_dim or s_next.size != self.state_dim or a.size != self.action_dim:
            raise ValueError("transition dimensions do not match the buffer")
        if not np.isfinite(t.r):
            raise ValueError("reward must be finite")
        i = self.cursor
        self.s[i], self.a[i], self.a_env[i], self.s_next[i] = s, a, a, s_next
        self.r[i] = t.r
        self.done[i] = float(bool(t.done))
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def sample_indices(self, n: int, rng: Rng) -> np.ndarray:
        """``n`` slots drawn i.i.d. uniformly with replacement."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, n)

    def gather(self, idx: np.ndarray) -> Batch:
        idx = np.asarray(idx)
        return Batch(
            idx, self.s[idx], self.a[idx], self.a_env[idx], self.s_next[idx], self.r[idx], self.done[idx]
        )

    def sample(self, n: int, rng: Rng) -> Batch:
        return self.gather(self.sample_indices(n, rng))

    def set_actions(self, idx: np.ndarray, actions: np.ndarray) -> None:
        self.a[np.asarray(idx)] = actions

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name)[: self.size] for name in self.FIELDS}

    def load_arrays(self, arrays: dict[str, np.ndarray], cursor: int) -> None:
        n = arrays["r"].shape[0]
        if n > self.capacity:
            raise ValueError("stored buffer exceeds capacity")
        for name in self.FIELDS:
            getattr(self, name)[:n] = arrays[name].reshape(getattr(self, name)[:n].shape)
        self.size = n
        self.cursor = int(cursor)

"""Policies that can be dropped into the DIPO loop.

Both expose the same small surface: ``sample``, ``fit_step``, ``models`` and
``soft_update``, so the training loop does not care which one it drives.
"""
from __future__ import annotations

import numpy as np

from ..diffusion import NoisePredictor, cosine_schedule, ddpm_sample, dsm_loss_and_grads
from ..mathcore import (
    MlpModel,
    Rng,
    TimeEmbedConfig,
    adam_step,
    clip_grad_norm,
    gaussian,
    init_mlp,
    mlp_apply,
    mlp_backward,
    mlp_forward,
    soft_update_params,
)


class DiffusionPolicy:
    """Noise-prediction network sampled with the DDPM backward recursion."""

    kind = "diffusion"

    def __init__(self, state_dim: int, action_dim: int, K: int, hidden_sizes, rng: Rng,
                 lr: float = 3e-4, grad_norm: float | None = 2.0, embed_dim: int = 32):
        embed = TimeEmbedConfig(embed_dim)
        schedule = cosine_schedule(K)
        model = init_mlp([action_dim + state_dim + embed_dim, *hidden_sizes, action_dim], rng)
        self.net = NoisePredictor(model, schedule, action_dim, state_dim, embed)
        self.target = NoisePredictor(model.copy(), schedule, action_dim, state_dim, embed)
        self.lr = lr
        self.grad_norm = grad_norm

    @property
    def schedule(self):
        return self.net.schedule

    def sample(self, s: np.ndarray, rng: Rng, target: bool = False, explore: bool = True) -> np.ndarray:
        return ddpm_sample(self.target if target else self.net, s, rng)

    def fit_step(self, s: np.ndarray, a: np.ndarray, rng: Rng) -> float:
        n = a.shape[0]
        k = rng.integers(1, self.schedule.K + 1, n)
        z = gaussian(rng, n, self.net.action_dim)
        loss, grads = dsm_loss_and_grads(self.net, s, a, k, z)
        if self.grad_norm:
            clip_grad_norm(grads, self.grad_norm)
        adam_step(self.net.model, grads, self.lr)
        return loss

    def models(self) -> dict[str, MlpModel]:
        return {"policy": self.net.model, "policy_target": self.target.model}

    def soft_update(self, rho: float) -> None:
        soft_update_params(self.target.model, self.net.model, rho)


class MlpPolicy:
    """Deterministic regression policy ``mu(s)`` with Gaussian exploration noise."""

    kind = "mlp"

    def __init__(self, state_dim: int, action_dim: int, hidden_sizes, rng: Rng,
                 lr: float = 3e-4, grad_norm: float | None = 2.0, explore_noise: float = 0.1):
        self.model = init_mlp([state_dim, *hidden_sizes, action_dim], rng)
        self.target_model = self.model.copy()
        self.action_dim = action_dim
        self.lr = lr
        self.grad_norm = grad_norm
        self.explore_noise = explore_noise

    def sample(self, s: np.ndarray, rng: Rng, target: bool = False, explore: bool = True) -> np.ndarray:
        s = np.atleast_2d(s)
        a = mlp_apply(self.target_model if target else self.model, s)
        if explore and self.explore_noise > 0:
            a = a + self.explore_noise * gaussian(rng, a.shape[0], self.action_dim)
        return a

    def fit_step(self, s: np.ndarray, a: np.ndarray, rng: Rng) -> float:
        """One Adam step on the batch mean of ``||a - mu(s)||^2``."""
        out, tape = mlp_forward(self.model, s)
        resid = out - a
        n = a.shape[0]
        loss = float(np.sum(resid * resid)) / n
        grads, _ = mlp_backward(self.model, tape, 2.0 * resid / n)
        if self.grad_norm:
            clip_grad_norm(grads, self.grad_norm)
        adam_step(self.model, grads, self.lr)
        return loss

    def models(self) -> dict[str, MlpModel]:
        return {"policy": self.model, "policy_target": self.target_model}

    def soft_update(self, rho: float) -> None:
        soft_update_params(self.target_model, self.model, rho)

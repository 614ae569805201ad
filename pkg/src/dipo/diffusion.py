"""Noise schedules, OU forward kernel, denoising score matching and reverse samplers.

Two reverse samplers live here:

* :func:`ddpm_sample` -- the discrete ``k = K..1`` denoising recursion driven by a
  noise predictor; this is what the RL agent uses to act.
* :func:`exp_integrator_sample` -- exponential-integrator discretization of the
  reverse OU SDE ``da = (a + 2 S(a, T - t)) dt + sqrt(2) dw`` with the score
  frozen over each step.  Accepts any score source, including the closed-form
  score of a Gaussian target (used for discretization-error checks).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mathcore import (
    MlpModel,
    Rng,
    TimeEmbedConfig,
    adam_step,
    clip_grad_norm,
    gaussian,
    mlp_apply,
    mlp_backward,
    mlp_forward,
    sinusoidal_embed,
)

BETA_MIN = 1e-8
BETA_MAX = 0.999


@dataclass
class NoiseSchedule:
    """Discrete diffusion coefficients, stored with index 0 as the noiseless level.

    ``beta[0]`` / ``alpha[0]`` / ``sigma[0]`` are padding; ``alpha_bar[0] == 1``.
    """

    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64).ravel()
        if beta.size < 1 or np.any(beta <= 0) or np.any(beta >= 1):
            raise ValueError("betas must lie in (0, 1)")
        self.beta = np.concatenate([[0.0], beta])
        self.alpha = 1.0 - self.beta
        self.alpha_bar = np.cumprod(self.alpha)
        sigma2 = np.zeros_like(self.beta)
        ab = self.alpha_bar
        sigma2[1:] = (1.0 - ab[:-1]) / (1.0 - ab[1:]) * self.beta[1:]
        self.sigma = np.sqrt(sigma2)

    @property
    def K(self) -> int:
        return self.beta.size - 1

    def check_index(self, k) -> None:
        k = np.asarray(k)
        if np.any(k < 1) or np.any(k > self.K):
            raise ValueError(f"diffusion index must lie in [1, {self.K}]")


def cosine_schedule(K: int, s: float = 0.008) -> NoiseSchedule:
    """Cosine alpha-bar schedule with betas clipped to ``[1e-8, 0.999]``."""
    if K < 2:
        raise ValueError(f"cosine schedule needs K >= 2, got {K}")
    k = np.arange(K + 1, dtype=np.float64)
    f = np.cos((k / K + s) / (1.0 + s) * np.pi / 2) ** 2
    ab = f / f[0]
    beta = 1.0 - ab[1:] / ab[:-1]
    return NoiseSchedule(np.clip(beta, BETA_MIN, BETA_MAX))


def linear_schedule(K: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    return NoiseSchedule(np.linspace(beta_start, beta_end, K))


# ---------------------------------------------------------------- forward side

def forward_sample(schedule: NoiseSchedule, a0: np.ndarray, k, z: np.ndarray) -> np.ndarray:
    """``sqrt(abar_k) a0 + sqrt(1 - abar_k) z``; ``k`` may be per-row."""
    schedule.check_index(k)
    a0 = np.asarray(a0, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if a0.shape != z.shape:
        raise ValueError(f"noise shape {z.shape} does not match action shape {a0.shape}")
    ab = schedule.alpha_bar[np.asarray(k)]
    if np.ndim(ab) == 1 and a0.ndim == 2:
        ab = ab[:, None]
    return np.sqrt(ab) * a0 + np.sqrt(1.0 - ab) * z


def ou_kernel_moments(a0: np.ndarray, t: float) -> tuple[np.ndarray, float]:
    """Mean and per-coordinate variance of ``a_t | a_0`` under ``da = -a dt + sqrt(2) dw``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return np.exp(-t) * np.asarray(a0, dtype=np.float64), 1.0 - np.exp(-2.0 * t)


def ou_kernel_sample(a0: np.ndarray, t: float, z: np.ndarray) -> np.ndarray:
    mean, var = ou_kernel_moments(a0, t)
    return mean + np.sqrt(var) * z


def ou_simulate(a0: np.ndarray, t: float, n: int, rng: Rng, dt: float = 0.01) -> np.ndarray:
    """Simulate the forward OU SDE step by step (trapezoidal scheme), ``n`` paths.

    Independent of the closed-form kernel.  The trapezoidal rule keeps the
    stationary variance at exactly 1 and has O(dt^2) weak error.
    """
    a0 = np.atleast_2d(np.asarray(a0, dtype=np.float64))
    steps = max(1, int(round(t / dt)))
    dt = t / steps
    decay = (1.0 - dt / 2) / (1.0 + dt / 2)
    scale = np.sqrt(2.0 * dt) / (1.0 + dt / 2)
    x = np.repeat(a0, n, axis=0)
    for _ in range(steps):
        x = decay * x + scale * gaussian(rng, n, a0.shape[1])
    return x


# -------------------------------------------------------------- score sources

@dataclass
class NoisePredictor:
    """A noise-prediction network ``eps(a_k, s, k)`` with its schedule.

    The network input is ``concat(noisy action, state, sinusoidal_embed(k))``.
    """

    model: MlpModel
    schedule: NoiseSchedule
    action_dim: int
    state_dim: int = 0
    embed: TimeEmbedConfig = field(default_factory=TimeEmbedConfig)

    def __post_init__(self):
        expected = self.action_dim + self.state_dim + self.embed.dim
        if self.model.in_dim != expected or self.model.out_dim != self.action_dim:
            raise ValueError(
                f"network maps {self.model.in_dim}->{self.model.out_dim}, "
                f"expected {expected}->{self.action_dim}"
            )
        self._table = sinusoidal_embed(np.arange(self.schedule.K + 1), self.embed)

    def net_input(self, a_k: np.ndarray, s: np.ndarray | None, k) -> np.ndarray:
        a_k = np.asarray(a_k, dtype=np.float64)
        n = a_k.shape[0]
        k = np.asarray(k)
        emb = self._table[k] if k.ndim == 1 else np.broadcast_to(self._table[int(k)], (n, self.embed.dim))
        parts = [a_k]
        if self.state_dim:
            s = np.asarray(s, dtype=np.float64)
            if s.shape != (n, self.state_dim):
                raise ValueError(f"state shape {s.shape} does not match ({n}, {self.state_dim})")
            parts.append(s)
        parts.append(emb)
        return np.concatenate(parts, axis=1)

    def predict(self, a_k: np.ndarray, s: np.ndarray | None, k) -> np.ndarray:
        return mlp_apply(self.model, self.net_input(a_k, s, k))

    def bind(self, s: np.ndarray | None, n: int):
        """Return ``eps(a_k, k)`` for a fixed state batch.

        The state and time-embedding parts of the first affine layer are
        computed once, so each call only multiplies the action columns.
        """
        W, b = self.model.params[0], self.model.params[1]
        d = self.action_dim
        base = np.broadcast_to(b, (n, b.shape[1]))
        if self.state_dim:
            s = np.asarray(s, dtype=np.float64)
            if s.shape != (n, self.state_dim):
                raise ValueError(f"state shape {s.shape} does not match ({n}, {self.state_dim})")
            base = s @ W[d:d + self.state_dim] + b
        emb = self._table @ W[d + self.state_dim:]
        W_a = W[:d]

        def eps(a_k: np.ndarray, k: int) -> np.ndarray:
            pre = a_k @ W_a
            pre += base
            pre += emb[k]
            return mlp_apply(self.model, a_k, first_pre=pre)

        return eps

    def score_at(self, a_k: np.ndarray, s: np.ndarray | None, k) -> np.ndarray:
        """Score estimate ``-eps / sqrt(1 - abar_k)`` at discrete level ``k``."""
        ab = self.schedule.alpha_bar[np.asarray(k)]
        if np.ndim(ab) == 1:
            ab = ab[:, None]
        return -self.predict(a_k, s, k) / np.sqrt(1.0 - ab)

    def level_for_time(self, t: float) -> int:
        """Discrete level whose noise matches OU time ``t`` (``abar = e^{-2t}``)."""
        times = -0.5 * np.log(self.schedule.alpha_bar[1:])
        return int(np.argmin(np.abs(times - t))) + 1

    def score(self, x: np.ndarray, s: np.ndarray | None, t: float) -> np.ndarray:
        return self.score_at(x, s, self.level_for_time(t))


def analytic_gaussian_score(mu, var0: float, t: float, x: np.ndarray) -> np.ndarray:
    """Score of the OU marginal started from ``N(mu, var0 I)`` at forward time ``t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if var0 <= 0:
        raise ValueError("target variance must be positive")
    decay = np.exp(-t)
    var_t = decay**2 * var0 + 1.0 - decay**2
    return -(np.asarray(x, dtype=np.float64) - decay * np.asarray(mu, dtype=np.float64)) / var_t


@dataclass
class AnalyticGaussian:
    mean: np.ndarray
    var: float

    def __post_init__(self):
        if self.var <= 0:
            raise ValueError("variance must be positive")
        self.mean = np.atleast_2d(np.asarray(self.mean, dtype=np.float64))

    def score(self, x: np.ndarray, s, t: float) -> np.ndarray:
        return analytic_gaussian_score(self.mean, self.var, t, x)


# ------------------------------------------------------------------------ DSM

def dsm_loss_and_grads(
    predictor: NoisePredictor,
    s: np.ndarray | None,
    a: np.ndarray,
    k,
    z: np.ndarray,
) -> tuple[float, list[np.ndarray]]:
    """Batch-mean of ``||z - eps(sqrt(abar_k) a + sqrt(1 - abar_k) z, s, k)||^2``.

    ``k`` is a scalar or one index per row.  Returns the loss and the gradient
    of that loss with respect to every network parameter.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if a.shape[1] != predictor.action_dim:
        raise ValueError(f"action dim {a.shape[1]} != {predictor.action_dim}")
    a_k = forward_sample(predictor.schedule, a, k, z)
    out, tape = mlp_forward(predictor.model, predictor.net_input(a_k, s, k))
    resid = out - z
    n = a.shape[0]
    loss = float(np.sum(resid * resid)) / n
    grads, _ = mlp_backward(predictor.model, tape, 2.0 * resid / n)
    return loss, grads


# ---------------------------------------------------------------- samplers

def ddpm_sample(
    predictor,
    s: np.ndarray | None,
    rng: Rng | None,
    n: int | None = None,
    a_init: np.ndarray | None = None,
    zero_noise: bool = False,
) -> np.ndarray:
    """Run the backward recursion from ``a_K ~ N(0, I)`` down to ``a_0``.

    ``a_{k-1} = (a_k - beta_k / sqrt(1 - abar_k) * eps(a_k, s, k)) / sqrt(alpha_k) + sigma_k z_k``
    with ``z_1 = 0``.  ``predictor`` needs ``schedule``, ``action_dim`` and
    ``predict(a_k, s, k)``.  No clipping is applied here.
    """
    sched = predictor.schedule
    if s is not None:
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        if n is None:
            n = s.shape[0]
    if a_init is not None:
        a = np.array(a_init, dtype=np.float64, ndmin=2)
        n = a.shape[0]
    else:
        if n is None:
            n = 1
        a = gaussian(rng, n, predictor.action_dim)
    if s is not None and s.shape[0] != n:
        raise ValueError("state batch and sample count disagree")
    if hasattr(predictor, "bind"):
        predict = predictor.bind(s, n)
    else:
        def predict(x, k):
            return predictor.predict(x, s, k)
    for k in range(sched.K, 0, -1):
        eps = predict(a, k)
        coef = sched.beta[k] / np.sqrt(1.0 - sched.alpha_bar[k])
        a = (a - coef * eps) / np.sqrt(sched.alpha[k])
        if k > 1 and not zero_noise:
            a = a + sched.sigma[k] * gaussian(rng, n, predictor.action_dim)
    return a


@dataclass(frozen=True)
class SdeSamplerConfig:
    T: float
    K: int

    def __post_init__(self):
        if self.T <= 0 or self.K < 1:
            raise ValueError("need T > 0 and K >= 1")

    @property
    def h(self) -> float:
        return self.T / self.K


def exp_integrator_sample(
    score,
    cfg: SdeSamplerConfig,
    rng: Rng | None,
    dim: int,
    n: int = 1,
    s: np.ndarray | None = None,
    a_init: np.ndarray | None = None,
    noises=None,
) -> np.ndarray:
    """Exponential-integrator discretization of the reverse OU SDE.

    Over ``[t_k, t_k + h]`` the score is frozen at ``S(a_{t_k}, s, T - t_k)`` and
    the linear part is integrated exactly::

        a_{k+1} = a_k + (e^h - 1)(a_k + 2 S) + sqrt(e^{2h} - 1) z_k

    ``noises`` optionally supplies ``z_0..z_{K-1}`` (an array ``(K, n, dim)`` or a
    callable ``k -> (n, dim)``), which allows coupling runs across step sizes.
    """
    h = cfg.h
    growth = np.expm1(h)
    noise_scale = np.sqrt(np.expm1(2.0 * h))
    if a_init is not None:
        a = np.array(a_init, dtype=np.float64, ndmin=2)
        n = a.shape[0]
    else:
        a = gaussian(rng, n, dim)
    for k in range(cfg.K):
        t_k = h * k
        drift = a + 2.0 * score.score(a, s, cfg.T - t_k)
        if noises is None:
            z = gaussian(rng, n, dim)
        elif callable(noises):
            z = noises(k)
        else:
            z = noises[k]
        a = a + growth * drift + noise_scale * z
    return a


def coupled_step_noises(fine: np.ndarray, fine_h: float, factor: int) -> np.ndarray:
    """Aggregate fine-grid integrator noises into a grid ``factor`` times coarser.

    ``fine`` is ``(K_fine, n, dim)`` standard normals, each standing for
    ``sqrt(2) int e^{t - t_j} dw / sqrt(e^{2 h_f} - 1)`` over one fine step.  The
    coarse draws are built from the same Brownian path and are again exactly
    standard normal.
    """
    K_fine = fine.shape[0]
    if K_fine % factor:
        raise ValueError("coarse grid must evenly divide the fine grid")
    w = np.exp(fine_h * np.arange(factor)) * np.sqrt(np.expm1(2 * fine_h))
    blocks = fine.reshape(K_fine // factor, factor, *fine.shape[1:])
    coarse = np.tensordot(w, blocks, axes=([0], [1]))
    return coarse / np.sqrt(np.expm1(2 * fine_h * factor))


# ---------------------------------------------------------------- diagnostics

def gaussian_kl(mean_a, var_a, mean_b, var_b) -> float:
    """KL(N(mean_a, diag var_a) || N(mean_b, diag var_b))."""
    mean_a, var_a, mean_b, var_b = (np.asarray(v, dtype=np.float64) for v in (mean_a, var_a, mean_b, var_b))
    if np.any(var_a <= 0) or np.any(var_b <= 0):
        raise ValueError("variances must be positive")
    ratio = var_a / var_b
    terms = ratio + (mean_b - mean_a) ** 2 / var_b - 1.0 - np.log(ratio)
    terms = np.broadcast_to(terms, np.broadcast(mean_a, var_a, mean_b, var_b).shape)
    return 0.5 * float(np.sum(terms))


def moment_matched_kl(samples: np.ndarray, mean, var) -> float:
    """KL from the moment-matched diagonal Gaussian of ``samples`` to ``N(mean, var)``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    return gaussian_kl(samples.mean(axis=0), samples.var(axis=0), np.ravel(mean), var)


def mode_coverage(samples: np.ndarray, modes: np.ndarray, radius: float) -> np.ndarray:
    """Fraction of samples whose nearest mode lies within ``radius``, per mode."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    modes = np.atleast_2d(np.asarray(modes, dtype=np.float64))
    if samples.shape[0] == 0:
        return np.zeros(modes.shape[0])
    d = np.linalg.norm(samples[:, None, :] - modes[None, :, :], axis=2)
    nearest = np.argmin(d, axis=1)
    hit = d[np.arange(samples.shape[0]), nearest] <= radius
    return np.bincount(nearest[hit], minlength=modes.shape[0]) / samples.shape[0]


def fit_noise_predictor(
    predictor: NoisePredictor,
    sample_data,
    steps: int,
    batch: int,
    lr: float,
    rng: Rng,
    max_grad_norm: float | None = None,
    k_sampler=None,
) -> np.ndarray:
    """Adam on the DSM loss with fresh data each step; returns the loss trace.

    ``sample_data(n) -> (states or None, actions)``.  Levels are uniform on
    ``1..K`` unless ``k_sampler(n)`` is given.  ``lr`` is a constant or a
    callable ``step -> lr``.
    """
    losses = np.empty(steps)
    K = predictor.schedule.K
    for i in range(steps):
        s, a = sample_data(batch)
        k = k_sampler(batch) if k_sampler is not None else rng.integers(1, K + 1, batch)
        z = gaussian(rng, a.shape[0], predictor.action_dim)
        losses[i], grads = dsm_loss_and_grads(predictor, s, a, k, z)
        if max_grad_norm is not None:
            clip_grad_norm(grads, max_grad_norm)
        adam_step(predictor.model, grads, lr(i) if callable(lr) else lr)
    return losses

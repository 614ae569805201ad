"""Deterministic numerics: seeded sampling, Mish MLPs with hand-written backprop, Adam.

Every array here is a 2D ``float64`` numpy array (vectors are ``1 x n``).
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

import numpy as np

_EXP_CLIP = 20.0  # tanh(softplus(20)) == 1.0 in float64


class Rng:
    """Seeded random stream backed by numpy's PCG64.

    Same seed plus same call sequence gives the same output on every platform.
    The full generator state round-trips through :meth:`get_state`/:meth:`set_state`
    as plain JSON-compatible data.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, rows: int, cols: int) -> np.ndarray:
        return self._gen.standard_normal((rows, cols))

    def uniform(self, low, high, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size) -> np.ndarray:
        """Integers in ``[low, high)``."""
        return self._gen.integers(low, high, size=size)

    def spawn(self, n: int) -> list["Rng"]:
        """Independent child streams, derived deterministically from this stream."""
        seeds = self._gen.integers(0, 2**63 - 1, size=n)
        return [Rng(int(s)) for s in seeds]

    def get_state(self) -> dict[str, Any]:
        return {"seed": self.seed, "bit_generator": copy.deepcopy(self._gen.bit_generator.state)}

    def set_state(self, state: dict[str, Any]) -> None:
        self.seed = int(state["seed"])
        self._gen.bit_generator.state = copy.deepcopy(state["bit_generator"])

    @classmethod
    def from_state(cls, state: dict[str, Any]) -> "Rng":
        rng = cls(state["seed"])
        rng.set_state(state)
        return rng


def gaussian(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """``rows x cols`` i.i.d. standard normal draws."""
    if rows < 1 or cols < 1:
        raise ValueError(f"gaussian shape must be positive, got ({rows}, {cols})")
    return rng.normal(rows, cols)


# --------------------------------------------------------------------------- Mish

def _mish_parts(x):
    # tanh(softplus(x)) = n / (n + 2) with n = e^x (e^x + 2)
    e = np.exp(np.minimum(x, _EXP_CLIP))
    n = e * (e + 2.0)
    return e, n / (n + 2.0)


def mish(x):
    """``x * tanh(softplus(x))``; works on scalars and arrays."""
    _, t = _mish_parts(x)
    return x * t


def mish_grad(x):
    """Exact derivative of :func:`mish`."""
    e, t = _mish_parts(x)
    sig = e / (1.0 + e)
    return t + x * (1.0 - t * t) * sig


# ---------------------------------------------------------------- time embedding

@dataclass(frozen=True)
class TimeEmbedConfig:
    dim: int = 32

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2:
            raise ValueError(f"embedding dim must be even and >= 2, got {self.dim}")


def sinusoidal_embed(k, cfg: TimeEmbedConfig = TimeEmbedConfig()) -> np.ndarray:
    """Sinusoidal encoding of a diffusion index (or an array of them).

    Returns ``len(k) x dim``: sines in the first half, cosines in the second,
    with frequencies ``10000^(-2i/dim)``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=np.float64))
    if np.any(k < 0):
        raise ValueError("diffusion index must be non-negative")
    half = cfg.dim // 2
    freqs = 10000.0 ** (-2.0 * np.arange(half) / cfg.dim)
    ang = k[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


# ------------------------------------------------------------------------- MLP

@dataclass
class MlpModel:
    """Feed-forward net: affine layers with Mish between them, affine output.

    Parameters are kept in one flat list ``[W0, b0, W1, b1, ...]`` with
    ``W_i`` of shape ``(in, out)`` and ``b_i`` of shape ``(1, out)``; the Adam
    moments mirror that list.
    """

    layer_sizes: list[int]
    params: list[np.ndarray]
    adam_m: list[np.ndarray] = field(default_factory=list)
    adam_v: list[np.ndarray] = field(default_factory=list)
    adam_t: int = 0

    def __post_init__(self):
        if len(self.params) != 2 * (len(self.layer_sizes) - 1):
            raise ValueError("parameter count does not match layer sizes")
        for i, (n_in, n_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            if self.params[2 * i].shape != (n_in, n_out) or self.params[2 * i + 1].shape != (1, n_out):
                raise ValueError(f"layer {i} parameters have the wrong shape")
        if not self.adam_m:
            self.adam_m = [np.zeros_like(p) for p in self.params]
            self.adam_v = [np.zeros_like(p) for p in self.params]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layer_sizes),
            [p.copy() for p in self.params],
            [m.copy() for m in self.adam_m],
            [v.copy() for v in self.adam_v],
            self.adam_t,
        )


def init_mlp(layer_sizes, rng: Rng) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases."""
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f"invalid layer sizes {sizes}")
    params = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        params.append(rng.uniform(-bound, bound, (n_in, n_out)))
        params.append(rng.uniform(-bound, bound, (1, n_out)))
    return MlpModel(sizes, params)


@dataclass
class Tape:
    inputs: list[np.ndarray]  # input to each affine layer
    pre: list[np.ndarray]  # pre-activations of hidden layers


def _check_input(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise ValueError(f"expected input of shape (batch, {model.in_dim}), got {x.shape}")
    return x


def mish_inplace(x: np.ndarray, tmp: np.ndarray | None = None) -> np.ndarray:
    """Overwrite ``x`` with ``mish(x)``; bit-identical to :func:`mish`."""
    e = np.minimum(x, _EXP_CLIP, out=tmp)
    np.exp(e, out=e)
    n = e  # n = e (e + 2), built in place
    n *= e + 2.0
    n /= n + 2.0
    x *= n
    return x


def mlp_apply(model: MlpModel, x: np.ndarray, first_pre: np.ndarray | None = None) -> np.ndarray:
    """Forward pass without keeping a tape.

    ``first_pre`` optionally replaces the first layer's pre-activation (callers
    that cache part of the first affine map use it).
    """
    h = _check_input(model, x) if first_pre is None else first_pre
    last = model.n_layers - 1
    tmp = None
    for i in range(model.n_layers):
        if i > 0 or first_pre is None:
            h = h @ model.params[2 * i]
            h += model.params[2 * i + 1]
        if i < last:
            if tmp is None or tmp.shape != h.shape:
                tmp = np.empty_like(h)
            mish_inplace(h, tmp)
    return h


def mlp_forward(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    h = _check_input(model, x)
    tape = Tape([], [])
    last = model.n_layers - 1
    for i in range(model.n_layers):
        tape.inputs.append(h)
        h = h @ model.params[2 * i] + model.params[2 * i + 1]
        if i < last:
            tape.pre.append(h)
            h = mish(h)
    return h, tape


def mlp_backward(model: MlpModel, tape: Tape, output_grad: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Reverse-mode gradients of ``sum(output * output_grad)``.

    Returns parameter gradients (same layout as ``model.params``) and the
    gradient with respect to the network input.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    batch = tape.inputs[0].shape[0]
    if g.shape != (batch, model.out_dim):
        raise ValueError(f"output_grad shape {g.shape} does not match ({batch}, {model.out_dim})")
    grads: list[np.ndarray] = [None] * len(model.params)  # type: ignore[list-item]
    for i in reversed(range(model.n_layers)):
        if i < model.n_layers - 1:
            g = g * mish_grad(tape.pre[i])
        grads[2 * i] = tape.inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0, keepdims=True)
        g = g @ model.params[2 * i].T
    return grads, g


# ------------------------------------------------------------------- optimizer

def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``.

    Returns the scale factor that was applied (1.0 when untouched).
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    for g in grads:
        g *= scale
    return scale


def adam_step(
    model: MlpModel,
    grads: list[np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    if len(grads) != len(model.params):
        raise ValueError("gradient list does not match model parameters")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient passed to adam_step")
    model.adam_t += 1
    t = model.adam_t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(model.params, grads, model.adam_m, model.adam_v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def soft_update_params(target: MlpModel, online: MlpModel, rho: float) -> None:
    """``target <- rho * target + (1 - rho) * online`` for every parameter."""
    for pt, p in zip(target.params, online.params):
        pt *= rho
        pt += (1.0 - rho) * p

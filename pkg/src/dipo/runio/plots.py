"""Dependency-free SVG plots: policy quiver, state scatter, learning curve."""
from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np

WIDTH = HEIGHT = 480
MARGIN = 48
QUIVER_SCALE = 0.45  # data units of arrow length per unit of action norm


def quiver_grid() -> np.ndarray:
    """The 49 states of the integer grid ``{-3..3}^2``, row-major in y then x."""
    g = np.arange(-3, 4, dtype=np.float64)
    xx, yy = np.meshgrid(g, g)
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def policy_quiver_data(sample, n_samples: int = 16) -> dict[str, np.ndarray]:
    """Mean sampled action at each grid state; ``sample(states) -> actions``."""
    states = quiver_grid()
    reps = np.repeat(states, n_samples, axis=0)
    acts = np.asarray(sample(reps)).reshape(len(states), n_samples, -1)
    return {"states": states, "actions": acts.mean(axis=1)}


class _Canvas:
    def __init__(self, xlim, ylim, title: str, xlabel: str, ylabel: str):
        self.xlim, self.ylim = xlim, ylim
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        ]
        self._axes(xlabel, ylabel)

    def px(self, x, y):
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        span = WIDTH - 2 * MARGIN
        u = MARGIN + (np.asarray(x) - x0) / (x1 - x0) * span
        v = HEIGHT - MARGIN - (np.asarray(y) - y0) / (y1 - y0) * span
        return u, v

    def _axes(self, xlabel, ylabel):
        lo, hi = MARGIN, WIDTH - MARGIN
        self.parts.append(
            f'<g class="axes" stroke="black" fill="none">'
            f'<line x1="{lo}" y1="{hi}" x2="{hi}" y2="{hi}"/>'
            f'<line x1="{lo}" y1="{hi}" x2="{lo}" y2="{lo}"/></g>'
        )
        for t in np.linspace(*self.xlim, 5):
            u, _ = self.px(t, self.ylim[0])
            self.parts.append(f'<text x="{u:.2f}" y="{hi + 16}" text-anchor="middle" font-size="10">{t:.3g}</text>')
        for t in np.linspace(*self.ylim, 5):
            _, v = self.px(self.xlim[0], t)
            self.parts.append(f'<text x="{lo - 6}" y="{v + 3:.2f}" text-anchor="end" font-size="10">{t:.3g}</text>')
        self.parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle" font-size="12">{xlabel}</text>')
        self.parts.append(
            f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 14 {HEIGHT / 2})">{ylabel}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _quiver(data) -> str:
    c = _Canvas((-4.0, 4.0), (-4.0, 4.0), "policy actions", "x", "y")
    states = np.asarray(data.get("states", np.zeros((0, 2))), dtype=np.float64).reshape(-1, 2)
    actions = np.asarray(data.get("actions", np.zeros((0, 2))), dtype=np.float64).reshape(-1, 2)
    if len(states) != len(actions):
        raise ValueError("quiver needs one action per state")
    tips = states + QUIVER_SCALE * actions
    u0, v0 = c.px(states[:, 0], states[:, 1])
    u1, v1 = c.px(tips[:, 0], tips[:, 1])
    c.parts.append('<g class="arrows" stroke="red" fill="red">')
    for a, b, p, q in zip(u0, v0, u1, v1):
        c.parts.append(f'<line class="arrow" x1="{a:.17g}" y1="{b:.17g}" x2="{p:.17g}" y2="{q:.17g}"/>')
        d = np.array([p - a, q - b])
        n = np.hypot(*d)
        if n > 1e-9:
            d /= n
            side = np.array([-d[1], d[0]])
            h = min(6.0, 0.4 * n)
            w1 = np.array([p, q]) - h * d + 0.5 * h * side
            w2 = np.array([p, q]) - h * d - 0.5 * h * side
            c.parts.append(f'<polygon points="{p:.2f},{q:.2f} {w1[0]:.2f},{w1[1]:.2f} {w2[0]:.2f},{w2[1]:.2f}"/>')
    c.parts.append("</g>")
    return c.render()


def _limits(v, pad=0.05):
    if v.size == 0:
        return (0.0, 1.0)
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    d = (hi - lo) * pad
    return (lo - d, hi + d)


def _scatter(data) -> str:
    states = np.asarray(data.get("states", np.zeros((0, 2))), dtype=np.float64).reshape(-1, 2)
    rounds = np.asarray(data.get("rounds", np.zeros(len(states))), dtype=np.float64).ravel()
    if len(rounds) != len(states):
        raise ValueError("scatter needs one round label per state")
    c = _Canvas((-7.0, 7.0), (-7.0, 7.0), "visited states", "x", "y")
    r0, r1 = _limits(rounds, 0.0)
    c.parts.append('<g class="points">')
    for (x, y), r in zip(states, rounds):
        f = (r - r0) / (r1 - r0)
        color = f"rgb({int(255 * f)},0,{int(255 * (1 - f))})"
        u, v = c.px(x, y)
        c.parts.append(f'<circle cx="{u:.2f}" cy="{v:.2f}" r="2" fill="{color}"/>')
    c.parts.append("</g>")
    return c.render()


def _curve(data) -> str:
    x = np.asarray(data.get("x", []), dtype=np.float64).ravel()
    y = np.asarray(data.get("y", []), dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("curve needs matching x and y")
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    c = _Canvas(_limits(x), _limits(y), data.get("title", "return"), data.get("xlabel", "round"),
                data.get("ylabel", "episode return"))
    if x.size:
        u, v = c.px(x, y)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(u, v))
        c.parts.append(f'<polyline class="curve" points="{pts}" fill="none" stroke="blue"/>')
    return c.render()


_KINDS = {"quiver": _quiver, "scatter": _scatter, "curve": _curve}


def emit_plot(kind: str, data: dict[str, Any] | None, path: str | Path) -> None:
    if kind not in _KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {sorted(_KINDS)}")
    Path(path).write_text(_KINDS[kind](data or {}), encoding="utf-8")

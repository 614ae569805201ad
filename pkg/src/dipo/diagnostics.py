"""Self-checks for the numerical building blocks, each with a pass threshold.

Every suite returns a list of :class:`Check` records (measured value against
threshold) so the same code backs the command line and the test-suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import (
    AnalyticGaussian,
    NoisePredictor,
    SdeSamplerConfig,
    analytic_gaussian_score,
    cosine_schedule,
    coupled_step_noises,
    ddpm_sample,
    exp_integrator_sample,
    fit_noise_predictor,
    mode_coverage,
    moment_matched_kl,
    ou_kernel_moments,
    ou_kernel_sample,
    ou_simulate,
)
from .mathcore import Rng, init_mlp, mlp_apply, mlp_backward, mlp_forward

GAUSS_MEAN, GAUSS_VAR = 3.0, 0.25


@dataclass
class Check:
    name: str
    measured: float
    threshold: float | tuple[float, float] | None
    passed: bool

    def line(self) -> str:
        if self.threshold is None:
            return f"INFO {self.name}: {self.measured:.6g}"
        status = "PASS" if self.passed else "FAIL"
        if isinstance(self.threshold, tuple):
            bound = f"in [{self.threshold[0]:.6g}, {self.threshold[1]:.6g}]"
        else:
            bound = f"< {self.threshold:.6g}"
        return f"{status} {self.name}: {self.measured:.6g} {bound}"


def _below(name: str, value: float, bound: float) -> Check:
    return Check(name, float(value), float(bound), bool(value < bound))


# ------------------------------------------------------------------ gradcheck

def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-8))


def gradcheck_errors(model, x: np.ndarray, w: np.ndarray, h: float = 1e-5) -> tuple[float, float]:
    """Worst relative error of analytic vs central-difference gradients of ``sum(out * w)``.

    Returns ``(parameter error, input error)``; each array is compared by its
    max-abs deviation relative to its max-abs finite-difference value.
    """
    _, tape = mlp_forward(model, x)
    grads, gin = mlp_backward(model, tape, w)

    def f():
        return float(np.sum(mlp_apply(model, x) * w))

    worst = 0.0
    for p, g in zip(model.params, grads):
        fd = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = f()
            p[idx] = old - h
            dn = f()
            p[idx] = old
            fd[idx] = (up - dn) / (2 * h)
        worst = max(worst, _rel_err(g, fd))
    fd_in = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        dn = f()
        x[idx] = old
        fd_in[idx] = (up - dn) / (2 * h)
    return worst, _rel_err(gin, fd_in)


def suite_gradcheck(seed: int = 0, n_nets: int = 20, max_width: int = 64) -> list[Check]:
    rng = Rng(seed)
    worst_p = worst_x = 0.0
    for _ in range(n_nets):
        n_in, n_out = (int(v) for v in rng.integers(1, 9, 2))
        widths = [int(v) for v in rng.integers(1, max_width + 1, 2)]
        model = init_mlp([n_in, *widths, n_out], rng)
        x = rng.normal(4, n_in)
        w = rng.normal(4, n_out)
        ep, ex = gradcheck_errors(model, x, w)
        worst_p, worst_x = max(worst_p, ep), max(worst_x, ex)
    return [
        _below(f"max parameter-gradient relative error over {n_nets} nets", worst_p, 1e-4),
        _below(f"max input-gradient relative error over {n_nets} nets", worst_x, 1e-4),
    ]


# ------------------------------------------------------------------------- OU

def _moment_checks(label: str, x: np.ndarray, mean: np.ndarray, var: float, n_se: float = 3.0) -> list[Check]:
    n = x.shape[0]
    out = []
    for j in range(x.shape[1]):
        xj = x[:, j]
        m, v = xj.mean(), xj.var(ddof=1)
        se_m = np.sqrt(v / n)
        # standard error of the sample variance from the sample fourth central moment
        m4 = np.mean((xj - m) ** 4)
        se_v = np.sqrt(max(m4 - v * v, 0.0) / n)
        out.append(Check(f"{label} mean[{j}] error in SE", abs(m - mean[j]) / se_m, n_se, abs(m - mean[j]) < n_se * se_m))
        out.append(Check(f"{label} var[{j}] error in SE", abs(v - var) / se_v, n_se, abs(v - var) < n_se * se_v))
    return out


def suite_ou(seed: int = 0, n: int = 100_000, times=(0.1, 0.5, 2.0)) -> list[Check]:
    """Closed-form forward kernel, plus a step-by-step simulation, against the kernel moments."""
    rng = Rng(seed)
    a0 = np.array([[2.0, -1.0]])
    checks = []
    for t in times:
        mean, var = ou_kernel_moments(a0, t)
        x = ou_kernel_sample(np.repeat(a0, n, axis=0), t, rng.normal(n, 2))
        checks += _moment_checks(f"kernel t={t}", x, mean[0], var)
        sim = ou_simulate(a0, t, n // 10, rng)
        checks += _moment_checks(f"simulated t={t}", sim, mean[0], var)
    return checks


# -------------------------------------------------------------------- sampler

class GaussianNoiseOracle:
    """Exact noise prediction for a Gaussian target at every discrete level."""

    def __init__(self, schedule, mean: float, var: float, dim: int = 1):
        self.schedule = schedule
        self.action_dim = dim
        self.mean, self.var = mean, var

    def predict(self, a_k, s, k):
        ab = self.schedule.alpha_bar[k]
        t = -0.5 * np.log(ab)
        return -np.sqrt(1.0 - ab) * analytic_gaussian_score(self.mean, self.var, t, a_k)


def suite_sampler(seed: int = 0, n: int = 100_000) -> list[Check]:
    """Both reverse samplers driven by the exact score of ``N(3, 0.25)``."""
    rng = Rng(seed)
    target = AnalyticGaussian(np.array([GAUSS_MEAN]), GAUSS_VAR)
    x = exp_integrator_sample(target, SdeSamplerConfig(6.0, 600), rng, 1, n=n)
    checks = [_below("exponential integrator KL, T=6, K=600", moment_matched_kl(x, GAUSS_MEAN, GAUSS_VAR), 0.01)]
    oracle = GaussianNoiseOracle(cosine_schedule(100), GAUSS_MEAN, GAUSS_VAR)
    y = ddpm_sample(oracle, None, rng, n=n)
    checks.append(_below("DDPM KL, K=100, exact noise", moment_matched_kl(y, GAUSS_MEAN, GAUSS_VAR), 0.01))
    return checks


# ------------------------------------------------------------------------ DSM

def train_gaussian_denoiser(seed: int = 0, steps: int = 6000, batch: int = 1024, hidden: int = 64,
                            lr: float = 2e-3, K: int = 100) -> NoisePredictor:
    """Fit a noise predictor to samples of ``N(3, 0.25)`` with a linearly decaying step size."""
    rng = Rng(seed)
    pred = NoisePredictor(init_mlp([1 + 32, hidden, hidden, 1], rng), cosine_schedule(K), 1)

    def data(m):
        return None, GAUSS_MEAN + np.sqrt(GAUSS_VAR) * rng.normal(m, 1)

    fit_noise_predictor(pred, data, steps, batch, lambda i: lr * (1 - i / steps) + 1e-5, rng)
    return pred


def score_mse(pred: NoisePredictor, k: int) -> float:
    """Mean squared score error over ``x in [1, 5]`` at level ``k``."""
    x = np.linspace(1.0, 5.0, 201)[:, None]
    ab = pred.schedule.alpha_bar[k]
    true = analytic_gaussian_score(GAUSS_MEAN, GAUSS_VAR, -0.5 * np.log(ab), x)
    return float(np.mean((pred.score_at(x, None, k) - true) ** 2))


def suite_dsm(seed: int = 0, k: int = 12) -> list[Check]:
    pred = train_gaussian_denoiser(seed)
    return [_below(f"score MSE on [1, 5] at k={k}", score_mse(pred, k), 0.05)]


MIXTURE_MODES = np.array([[0.0, 2.0], [0.0, -2.0], [2.0, 0.0], [-2.0, 0.0]])


def train_mixture_denoiser(seed: int = 0, steps: int = 4000, batch: int = 512, hidden: int = 128,
                           lr: float = 2e-3, K: int = 100) -> NoisePredictor:
    """Fit a 2D noise predictor to the balanced four-mode mixture (std 0.2)."""
    rng = Rng(seed)
    pred = NoisePredictor(init_mlp([2 + 32, hidden, hidden, 2], rng), cosine_schedule(K), 2)

    def data(m):
        return None, MIXTURE_MODES[rng.integers(0, 4, m)] + 0.2 * rng.normal(m, 2)

    fit_noise_predictor(pred, data, steps, batch, lambda i: lr * (1 - i / steps) + 1e-5, rng)
    return pred


def mixture_coverage(pred: NoisePredictor, seed: int = 0, n: int = 4000, radius: float = 0.6) -> np.ndarray:
    return mode_coverage(ddpm_sample(pred, None, Rng(seed), n=n), MIXTURE_MODES, radius)


# ------------------------------------------------------------------- theorem1

def discretization_kls(seed: int = 0, Ks=(75, 150, 300, 600), T: float = 6.0, n: int = 100_000,
                       chunk: int = 10_000) -> np.ndarray:
    """Moment-matched KL to ``N(3, 0.25)`` of the exponential integrator at each K.

    All step counts share one initial draw and one Brownian path per sample
    (built on the finest grid), so the differences isolate discretization error.
    """
    K_fine = int(np.lcm.reduce(np.asarray(Ks)))
    target = AnalyticGaussian(np.array([GAUSS_MEAN]), GAUSS_VAR)
    rng = Rng(seed)
    outs: dict[int, list[np.ndarray]] = {K: [] for K in Ks}
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        a0 = rng.normal(m, 1)
        fine = rng.normal(K_fine * m, 1).reshape(K_fine, m, 1)
        for K in Ks:
            z = coupled_step_noises(fine, T / K_fine, K_fine // K)
            outs[K].append(exp_integrator_sample(target, SdeSamplerConfig(T, K), None, 1, a_init=a0, noises=z))
    return np.array([moment_matched_kl(np.concatenate(outs[K]), GAUSS_MEAN, GAUSS_VAR) for K in Ks])


def suite_theorem1(seed: int = 0, Ks=(75, 150, 300, 600)) -> list[Check]:
    """KL must fall with K; the error ``sqrt(KL)`` must halve when h halves."""
    kls = discretization_kls(seed, Ks)
    checks = []
    for K, kl in zip(Ks, kls):
        checks.append(Check(f"KL at K={K}", float(kl), None, True))
    checks.append(Check("KL decreasing in K (max successive ratio)", float(np.max(kls[1:] / kls[:-1])), 1.0,
                        bool(np.all(np.diff(kls) < 0))))
    for (K0, k0), (K1, k1) in zip(zip(Ks, kls), zip(Ks[1:], kls[1:])):
        r = float(np.sqrt(k0 / k1))
        checks.append(Check(f"error ratio K={K0}->{K1}", r, (1.5, 2.5), 1.5 <= r <= 2.5))
    checks.append(_below(f"KL at K={Ks[-1]}", kls[-1], 0.01))
    return checks


SUITES = {
    "ou": suite_ou,
    "sampler": suite_sampler,
    "dsm": suite_dsm,
    "gradcheck": suite_gradcheck,
    "theorem1": suite_theorem1,
}

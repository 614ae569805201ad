"""End-to-end acceptance checks, one test per criterion, each with its time budget.

Run ``pytest tests/test_acceptance.py -v`` (or this file directly); a summary
with one PASS/FAIL line per criterion is printed at the end.
"""
import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from dipo import diagnostics
from dipo.cli import build_run, main
from dipo.envs import ConstantChain, QuadraticBandit
from dipo.mathcore import Rng
from dipo.rl import (
    DipoConfig,
    ReplayBuffer,
    Transition,
    act,
    action_gradient_pass,
    critic_update,
    evaluate,
    make_agent,
    soft_update,
    train,
)
from dipo.runio import config_from_dict, config_to_dict, load_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def _checks_pass(checks):
    return all(c.passed for c in checks)


def test_criterion_01_gradients(report):
    with Timer() as t:
        checks = diagnostics.suite_gradcheck(seed=0, n_nets=20, max_width=64)
    ok = _checks_pass(checks) and t.seconds < 30
    report(1, ok, f"worst rel err param {checks[0].measured:.2e} input {checks[1].measured:.2e} "
                  f"(< 1e-4), {t.seconds:.1f}s (< 30s)")
    assert ok


def test_criterion_02_ou_kernel(report):
    with Timer() as t:
        checks = diagnostics.suite_ou(seed=0, n=100_000)
    worst = max(c.measured for c in checks)
    ok = _checks_pass(checks) and t.seconds < 10
    report(2, ok, f"worst moment error {worst:.2f} SE (< 3), {t.seconds:.1f}s (< 10s)")
    assert ok


def test_criterion_03_integrator_convergence(report):
    Ks = (75, 150, 300, 600)
    with Timer() as t:
        kls = diagnostics.discretization_kls(seed=0, Ks=Ks)
    ratios = np.sqrt(kls[:-1] / kls[1:])
    ok = (bool(np.all(np.diff(kls) < 0)) and bool(np.all((ratios >= 1.5) & (ratios <= 2.5)))
          and kls[-1] < 0.01 and t.seconds < 120)
    report(3, ok, f"KL {[f'{v:.2e}' for v in kls]}; error ratios {np.round(ratios, 3).tolist()} "
                  f"in [1.5, 2.5]; {t.seconds:.1f}s (< 120s)")
    assert ok


def test_criterion_04_dsm_score(report):
    with Timer() as t:
        pred = diagnostics.train_gaussian_denoiser(seed=0)
        mse = diagnostics.score_mse(pred, k=12)
    ok = mse < 0.05 and t.seconds < 120
    report(4, ok, f"score MSE at k=12 (noise std {np.sqrt(1 - pred.schedule.alpha_bar[12]):.3f}) "
                  f"{mse:.4f} (< 0.05), {t.seconds:.1f}s (< 120s)")
    assert ok


def test_criterion_05_multimodality(report):
    with Timer() as t:
        pred = diagnostics.train_mixture_denoiser(seed=0)
        cov = diagnostics.mixture_coverage(pred, seed=1, n=4000, radius=0.6)
    ok = bool(np.all(np.abs(cov - 0.25) <= 0.10)) and cov.sum() >= 0.9 and t.seconds < 300
    report(5, ok, f"per-mode {np.round(cov, 3).tolist()} total {cov.sum():.3f}, {t.seconds:.1f}s (< 300s)")
    assert ok


def test_criterion_06_bandit_action_gradient(report):
    with Timer() as t:
        env = QuadraticBandit([0.5, -0.3], rng=Rng(0))
        agent = make_agent(env.spec, DipoConfig(hidden_sizes=(64, 64), K=10, critic_lr=3e-3), seed=0)
        buf = ReplayBuffer(1000, 1, 2)
        rng = Rng(1)
        for _ in range(512):
            s = env.reset()
            a = rng.uniform(-1, 1, 2)
            res = env.step(a)
            buf.push(Transition(s, a, res.s_next, res.r, res.done))
        for _ in range(200):
            for _ in range(5):
                critic_update(agent, buf.sample(256, agent.rng))
            action_gradient_pass(agent, buf, np.arange(buf.size))
        dist = float(np.linalg.norm(buf.a[: buf.size] - env.a_star, axis=1).mean())
    ok = dist < 0.1 and t.seconds < 120
    report(6, ok, f"mean |a - a*| {dist:.4f} (< 0.1), {t.seconds:.1f}s (< 120s)")
    assert ok


def test_criterion_07_critic_fixed_point(report):
    with Timer() as t:
        env = ConstantChain(rng=Rng(0))
        agent = make_agent(env.spec, DipoConfig(hidden_sizes=(32, 32), K=5, batch_size=64, tau=0.5), seed=0)
        buf = ReplayBuffer(100, 1, 1)
        for _ in range(64):
            s = env.reset()
            a = act(agent, s[None])[0]
            res = env.step(a)
            buf.push(Transition(s, a, res.s_next, res.r, res.done))
        # decaying step size: Adam's fixed-size steps otherwise leave a bias that gamma amplifies 100x
        for lr, n in ((3e-3, 3000), (1e-3, 2000), (3e-4, 2000)):
            agent.config.critic_lr = lr
            for _ in range(n):
                critic_update(agent, buf.sample(64, agent.rng))
                soft_update(agent)
        q, _ = agent.critic.min_q_and_grad(buf.s[: buf.size], buf.a_env[: buf.size])
    err = float(np.max(np.abs(q - 100.0)))
    ok = err < 1.0 and t.seconds < 60
    report(7, ok, f"max |Q - 100| {err:.3f} (< 1), {t.seconds:.1f}s (< 60s)")
    assert ok


def _train_and_eval(config_file):
    cfg = load_config(config_file)
    agent, venv, buf = build_run(cfg)
    train(agent, venv, cfg.rounds, buf=buf)
    return cfg, venv, evaluate(agent, cfg.make_env, 100, seed=cfg.seed)


def test_criterion_08_multigoal_end_to_end(report):
    with Timer() as t:
        cfg, venv, ev = _train_and_eval(CONFIGS / "multigoal.json")
    d = cfg.dipo
    fr = np.array(ev["per_goal_fractions"])
    defaults = (d.K, d.batch_size, d.action_lr) == (100, 256, 0.03)
    ok = (defaults and venv.total_steps <= 30_000 and ev["goals_reached_frac"] >= 0.8
          and int(np.sum(fr >= 0.10)) >= 3 and t.seconds < 900)
    report(8, ok, f"reach {ev['goals_reached_frac']:.2f} (>= 0.8), per-goal {np.round(fr, 2).tolist()} "
                  f"(>= 3 goals at >= 0.10), {venv.total_steps} env steps, {t.seconds:.0f}s (< 900s)")
    assert ok


def test_criterion_09_mlp_baseline(report):
    with Timer() as t:
        cfg, venv, ev = _train_and_eval(CONFIGS / "multigoal_mlp.json")
    ok = cfg.policy == "mlp" and ev["goals_reached_frac"] >= 0.5
    report(9, ok, f"baseline reach {ev['goals_reached_frac']:.2f} (>= 0.5), per-goal "
                  f"{np.round(ev['per_goal_fractions'], 2).tolist()}, {venv.total_steps} env steps, {t.seconds:.0f}s")
    assert ok


def test_criterion_10_determinism_and_resume(report, tmp_path, capsys):
    doc = {**config_to_dict(load_config(CONFIGS / "multigoal.json")),
           "eval_every": 0, "checkpoint_every": 0, "warmup_steps": 480}
    cfg_file = tmp_path / "cfg.json"
    config_from_dict(doc)
    cfg_file.write_text(json.dumps(doc))
    runs = {name: tmp_path / name for name in ("a", "b", "c")}
    codes = [
        main(["train", "--config", str(cfg_file), "--out", str(runs["a"]), "--rounds", "10"]),
        main(["train", "--config", str(cfg_file), "--out", str(runs["b"]), "--rounds", "10"]),
        main(["train", "--config", str(cfg_file), "--out", str(runs["c"]), "--rounds", "5"]),
        main(["train", "--resume", str(runs["c"] / "final.dipo"), "--rounds", "5"]),
    ]
    capsys.readouterr()
    a, b, c = ((runs[k] / "metrics.csv").read_bytes() for k in "abc")
    ok = codes == [0, 0, 0, 0] and a == b and a == c and a.count(b"\n") == 11
    report(10, ok, f"rerun identical: {a == b}; 5 + resume + 5 identical to 10: {a == c}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))

"""Command-line entry point: ``dipo train | eval | diagnose | plot``.

Exit codes: 0 success, 1 invalid input, 2 file or checkpoint problem,
3 numerical failure (including failed diagnostics).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics
from .mathcore import Rng
from .rl import ReplayBuffer, VecEnv, evaluate, make_agent, train
from .runio import (
    CheckpointError,
    ConfigError,
    ConfigReadError,
    RunConfig,
    capture,
    config_from_dict,
    config_to_dict,
    emit_plot,
    load_checkpoint,
    load_config,
    metrics_append,
    policy_quiver_data,
    read_metrics,
    restore,
    save_checkpoint,
    save_config,
)

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="dipo", description="Diffusion-policy actor-critic experiments.", formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="run training rounds", formatter_class=fmt)
    t.add_argument("--config", type=Path, default=None, help="JSON run config (missing keys take defaults)")
    t.add_argument("--out", type=Path, default=None, help="output directory (overrides config out_dir)")
    t.add_argument("--seed", type=_u64, default=None, help="seed (overrides config)")
    t.add_argument("--rounds", type=_nonneg, default=None, help="rounds to run (overrides config)")
    t.add_argument("--resume", type=Path, default=None, help="checkpoint to continue from")

    e = sub.add_parser("eval", help="evaluate a checkpoint's target policy", formatter_class=fmt)
    e.add_argument("--ckpt", type=Path, required=True, help="checkpoint to evaluate")
    e.add_argument("--episodes", type=_nonneg, default=100, help="evaluation episodes")
    e.add_argument("--seed", type=_u64, default=0, help="seed for episode starts and sampling")

    d = sub.add_parser("diagnose", help="run a numerical self-check suite", formatter_class=fmt)
    d.add_argument("--suite", choices=sorted(diagnostics.SUITES), required=True, help="suite to run")
    d.add_argument("--seed", type=_u64, default=0, help="seed for all random draws")

    pl = sub.add_parser("plot", help="write an SVG plot", formatter_class=fmt)
    src = pl.add_mutually_exclusive_group(required=True)
    src.add_argument("--ckpt", type=Path, default=None, help="checkpoint (quiver, scatter)")
    src.add_argument("--metrics", type=Path, default=None, help="metrics.csv (curve)")
    pl.add_argument("--kind", choices=["quiver", "scatter", "curve"], required=True, help="plot type")
    pl.add_argument("--out", type=Path, required=True, help="SVG file to write")
    pl.add_argument("--seed", type=_u64, default=0, help="seed for policy sampling")
    return p


# ------------------------------------------------------------------ helpers

def build_run(cfg: RunConfig):
    """Fresh agent, vectorized envs and buffer for a config, all seeded from ``cfg.seed``."""
    agent_seed, env_seed = (int(v) for v in Rng(cfg.seed).integers(0, 2**63 - 1, 2))
    probe = cfg.make_env(Rng(0))
    agent = make_agent(probe.spec, cfg.dipo, cfg.policy, seed=agent_seed)
    venv = VecEnv.create(cfg.make_env, cfg.dipo.n_envs, Rng(env_seed))
    buf = ReplayBuffer(cfg.dipo.buffer_capacity, probe.spec.state_dim, probe.spec.action_dim)
    return agent, venv, buf


def restore_run(path: Path):
    ck = load_checkpoint(path)
    cfg = config_from_dict(ck.config)
    agent, venv, buf = build_run(cfg)
    round_no = restore(ck, agent, venv, buf)
    return cfg, agent, venv, buf, round_no


def _json_out(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# ----------------------------------------------------------------- commands

def cmd_train(args) -> int:
    if args.resume is not None:
        cfg, agent, venv, buf, start = restore_run(args.resume)
    else:
        cfg = load_config(args.config) if args.config is not None else RunConfig()
        start = 0
    overrides = {k: v for k, v in (("seed", args.seed), ("rounds", args.rounds)) if v is not None}
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    if overrides:
        if args.resume is not None and "seed" in overrides:
            raise UsageError("--seed cannot change a resumed run")
        cfg = config_from_dict({**config_to_dict(cfg), **overrides})
    if args.resume is None:
        agent, venv, buf = build_run(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    snapshot = config_to_dict(cfg)
    last_eval = None

    def on_round(i, row):
        nonlocal last_eval
        metrics_append(out / "metrics.csv", row)
        if cfg.eval_every and i % cfg.eval_every == 0:
            last_eval = {"round": i, **evaluate(agent, cfg.make_env, cfg.eval_episodes, seed=cfg.seed)}
            with open(out / "eval.jsonl", "a", encoding="utf-8") as f:
                f.write(json.dumps(last_eval, sort_keys=True) + "\n")
        if cfg.checkpoint_every and i % cfg.checkpoint_every == 0:
            save_checkpoint(out / f"round{i:06d}.dipo", capture(agent, venv, buf, snapshot, i))

    rows = train(agent, venv, cfg.rounds, buf=buf, callbacks=[on_round], start_round=start)
    end = start + len(rows)
    save_checkpoint(out / "final.dipo", capture(agent, venv, buf, snapshot, end))
    _json_out({"rounds_completed": end, "env_steps": venv.total_steps, "out_dir": str(out), "last_eval": last_eval})
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg, agent, _, _, round_no = restore_run(args.ckpt)
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    res = evaluate(agent, cfg.make_env, args.episodes, seed=args.seed)
    _json_out({"round": round_no, **res})
    return EXIT_OK


def cmd_diagnose(args) -> int:
    checks = diagnostics.SUITES[args.suite](seed=args.seed)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print(f"{args.suite}: {'all checks passed' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_plot(args) -> int:
    if args.kind == "curve":
        if args.metrics is None:
            raise UsageError("curve plots need --metrics")
        rows = read_metrics(args.metrics)
        data = {"x": [r["round"] for r in rows], "y": [r["episode_return_mean"] for r in rows]}
    else:
        if args.ckpt is None:
            raise UsageError(f"{args.kind} plots need --ckpt")
        cfg, agent, _, buf, _ = restore_run(args.ckpt)
        if args.kind == "quiver":
            if agent.spec.state_dim != 2 or agent.spec.action_dim != 2:
                raise UsageError("quiver plots need a 2D state and action space")
            rng = Rng(args.seed)
            data = policy_quiver_data(lambda s: agent.clamp(agent.policy.sample(s, rng, target=True, explore=False)))
        else:
            if agent.spec.state_dim != 2:
                raise UsageError("scatter plots need a 2D state space")
            per_round = cfg.dipo.n_envs * cfg.dipo.rollout_steps
            n = buf.size
            data = {"states": buf.s[:n], "rounds": np.arange(n) // per_round + 1}
    emit_plot(args.kind, data, args.out)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "diagnose": cmd_diagnose, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigReadError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (CheckpointError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except FloatingPointError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

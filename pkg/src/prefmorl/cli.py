"""Command-line entry point.

Subcommands:
  train    run preference-based training or the ground-truth baseline
  eval     recompute metrics for a saved run and export report files
  pareto   frontier algorithms over instance files or enumerable tasks
  serve    train with the HTTP labeling service attached

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import artifacts as art
from .core import DiscountConfig, default_eval_grid, simplex_grid
from .envs import ENV_NAMES, make_env, validate_env_config
from .eql import TrainerConfig, greedy_action
from .errors import ConfigError, PrefMorlError
from .metrics import FrontierEstimate, hypervolume, rollout_return
from .pareto import (
    FinitePolicySet,
    brute_force_frontier,
    convex_frontier,
    enumerate_policies,
    nonconvex_frontier,
)
from .reporting import render_frontier, write_report
from .service import PreferenceService, ServiceServer
from .teacher import ScriptedTeacher
from .trainer import Trainer, desk_config

log = logging.getLogger("prefmorl")

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def build_parser() -> _Parser:
    parser = _Parser(prog="prefmorl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run training")
    _add_train_args(train)

    evalp = sub.add_parser("eval", help="evaluate a saved run")
    evalp.add_argument("--run", required=True, help="run directory")
    evalp.add_argument("--seed", type=int, default=0, help="evaluation rollout seed")
    evalp.add_argument(
        "--export",
        choices=["csv"],
        help="write curve CSV and figures next to the metric log",
    )

    pareto = sub.add_parser("pareto", help="frontier algorithms")
    src = pareto.add_mutually_exclusive_group(required=True)
    src.add_argument("--env", choices=["dst", "ft"], help="enumerable task")
    src.add_argument("--instance", help="JSON instance file with a 'returns' list")
    pareto.add_argument(
        "--algo", choices=["convex", "nonconvex", "brute"], default="brute"
    )
    pareto.add_argument("--grid", type=int, default=101, help="weight grid size")
    pareto.add_argument("--check", action="store_true", help="compare against the oracle")
    pareto.add_argument("--out", help="write the frontier indices to this JSON file")

    serve = sub.add_parser("serve", help="train with the HTTP labeling service")
    _add_train_args(serve)
    serve.add_argument("--port", type=int, default=8710)
    serve.add_argument("--bind", default="127.0.0.1")
    serve.add_argument("--static", help="directory of labeling UI assets to serve")
    serve.add_argument(
        "--expiry-seconds",
        type=float,
        default=None,
        help="expire unanswered queries after this many seconds",
    )
    return parser


def _add_train_args(p) -> None:
    p.add_argument("--env", required=True, help=f"task: one of {', '.join(ENV_NAMES)}")
    p.add_argument("--teacher", choices=["scripted", "http"], default="scripted")
    p.add_argument("--oracle", action="store_true", help="train on true rewards")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.add_argument("--force", action="store_true", help="overwrite an existing run")
    p.add_argument("--config", help="JSON config file: {'trainer': {...}, 'env': {...}}")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a trainer config field",
    )


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _build_config(args) -> tuple[TrainerConfig, dict]:
    cfg_dict = art.config_to_dict(desk_config(args.env, args.steps, oracle=args.oracle))
    env_overrides: dict = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_cfg) - {"trainer", "env"}
        if unknown:
            raise ConfigError(f"unknown top-level config sections: {sorted(unknown)}")
        trainer_section = file_cfg.get("trainer", {})
        cfg_dict.update(trainer_section)
        env_overrides = validate_env_config(args.env, file_cfg.get("env", {}))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set needs KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        cfg_dict[key] = _parse_value(raw)
    cfg_dict["total_timesteps"] = args.steps
    return art.config_from_dict(cfg_dict), env_overrides


def cmd_train(args) -> int:
    if args.env not in ENV_NAMES:
        raise ConfigError(f"unknown environment {args.env!r}; choose from {ENV_NAMES}")
    outdir = Path(args.outdir)
    if outdir.exists() and any(outdir.iterdir()) and not args.force:
        raise ConfigError(
            f"output directory {outdir} already holds files; pass --force to replace"
        )
    cfg, env_overrides = _build_config(args)
    env = make_env(args.env, overrides=env_overrides or None)
    teacher = None if args.oracle else ScriptedTeacher(DiscountConfig(cfg.gamma))
    trainer = Trainer(env, cfg, teacher=teacher, oracle=args.oracle)
    log.info("training %s for %d steps (seed %d)", args.env, args.steps, args.seed)
    result = trainer.run(args.seed)
    art.write_run_dir(
        outdir,
        result,
        command=sys.argv[1:],
        teacher_mode="oracle" if args.oracle else args.teacher,
        force=args.force,
    )
    log.info("final EU %.4f HV %.4f -> %s", result.final_eu, result.final_hv, outdir)
    return 0


def cmd_eval(args) -> int:
    run = art.load_run(args.run)
    if "q" not in run:
        raise ConfigError(f"{args.run} holds no Q-function checkpoint")
    env, q = run["env"], run["q"]
    cfg = run["config"]
    disc = DiscountConfig(cfg.gamma)
    grid = default_eval_grid(env.spec.m)
    act = lambda s, w: greedy_action(q, s, w)
    returns = np.stack(
        [rollout_return(act, env, w, disc, seed=args.seed + i) for i, w in enumerate(grid)]
    )
    frontier = returns[brute_force_frontier(returns)]
    estimate = FrontierEstimate(frontier, np.asarray(env.spec.hv_reference))
    hv = hypervolume(estimate)
    eus = [
        float(r @ w.as_array()) for r, w in zip(returns, grid)
    ]
    eu = float(np.mean(eus))
    print(f"eu={eu:.6f} hv={hv:.6f} frontier_points={len(frontier)}")
    if args.export == "csv":
        paths = write_report(
            run["metrics"],
            Path(args.run) / "report",
            prefix=run["manifest"]["env"],
            frontier=frontier,
            reference=np.asarray(env.spec.hv_reference),
        )
        for name, p in paths.items():
            print(f"{name}: {p}")
    return 0


def cmd_pareto(args) -> int:
    cfg = DiscountConfig()
    teacher = ScriptedTeacher(cfg)
    if args.instance:
        try:
            ps = FinitePolicySet.from_instance_file(args.instance)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot read instance file {args.instance}: {exc}") from exc
        H = 1
    else:
        ps = enumerate_policies(make_env(args.env))
        H = ps.full_length
    if args.algo == "brute":
        indices = brute_force_frontier(ps.returns(cfg))
    elif args.algo == "convex":
        grid = simplex_grid(ps.m, max(1, args.grid - 1))
        indices = convex_frontier(ps, grid, teacher, H=H, cfg=cfg)
    else:
        indices = nonconvex_frontier(ps, teacher, H=H, cfg=cfg)
    print(json.dumps({"algo": args.algo, "indices": indices}))
    if args.out:
        Path(args.out).write_text(json.dumps({"indices": indices}, indent=2))
    if args.check and args.algo != "brute":
        oracle = brute_force_frontier(ps.returns(cfg))
        if args.algo == "nonconvex":
            ok = indices == oracle
        else:
            ok = set(indices) <= set(oracle)
        if not ok:
            print(f"check FAILED: oracle {oracle}", file=sys.stderr)
            return RUNTIME_EXIT
        print("check passed")
    return 0


def cmd_serve(args) -> int:
    if args.env not in ENV_NAMES:
        raise ConfigError(f"unknown environment {args.env!r}; choose from {ENV_NAMES}")
    outdir = Path(args.outdir)
    if outdir.exists() and any(outdir.iterdir()) and not args.force:
        raise ConfigError(
            f"output directory {outdir} already holds files; pass --force to replace"
        )
    cfg, env_overrides = _build_config(args)
    env = make_env(args.env, overrides=env_overrides or None)
    from .replay import PreferenceBuffer

    service = PreferenceService(
        env,
        PreferenceBuffer(window=cfg.segment_len or env.spec.segment_len),
        expiry_seconds=args.expiry_seconds,
    )
    try:
        server = ServiceServer(
            service, host=args.bind, port=args.port, static_dir=args.static
        )
    except OSError as exc:
        raise ConfigError(f"cannot bind {args.bind}:{args.port}: {exc}") from exc
    server.start()
    log.info("labeling service on http://%s:%d", args.bind, server.port)
    teacher = service if args.teacher == "http" else ScriptedTeacher(DiscountConfig(cfg.gamma))
    trainer = Trainer(
        env,
        cfg,
        teacher=teacher,
        oracle=args.oracle,
        status_sink=lambda status: service.status.update(status),
    )
    interrupted = False
    try:
        result = trainer.run(args.seed)
    except KeyboardInterrupt:
        interrupted = True
        result = trainer.partial_artifacts()
        log.info("interrupted; checkpointing partial run")
    finally:
        server.stop()
    if result is not None:
        art.write_run_dir(
            outdir,
            result,
            command=sys.argv[1:],
            teacher_mode=args.teacher,
            force=args.force,
        )
    return 0 if not interrupted else 0


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": cmd_train,
        "eval": cmd_eval,
        "pareto": cmd_pareto,
        "serve": cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except PrefMorlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())

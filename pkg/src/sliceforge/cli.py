"""Command-line entry point: gen, train, eval, sweep, grad-check.

All randomness flows from --seed; re-running any command with identical
flags produces byte-identical output files (the optional training log is the
one exception, since it records wall-clock timings). Every output file
carries the fully resolved configuration, as a "config" key in JSON and a
leading comment row in CSV.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import drn, harness, sched, trainer
from .core import BASE_CONFIG, MINI_CONFIG, PROFILES, ConfigError, ScenarioConfig, generate_scenario
from .drn import CheckpointError
from .gradcheck import PRIMITIVE_CHECKS, check_full_network

AXIS_ALIASES = {
    "slices": "slice_count",
    "vnfs": "vnfs_per_slice",
    "demand": "mean_demand",
    "capacity": "mean_capacity",
}

PRIMITIVE_TOLERANCE = 1e-4
NETWORK_TOLERANCE = 1e-3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we want 1
        raise _UsageError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="scenario config JSON file")
    parser.add_argument(
        "--profile", choices=sorted(PROFILES), default="base",
        help="built-in config profile used when --config is absent",
    )
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")


def build_parser() -> _Parser:
    parser = _Parser(prog="sliceforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a scenario file")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="output scenario JSON")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train the slice scheduler")
    _add_config_flags(p)
    p.add_argument("--lr", type=float, default=1e-4, help="Adam learning rate")
    p.add_argument("--iters", type=int, default=500, help="training iterations")
    p.add_argument("--batch", type=int, default=256, help="replay batch size")
    p.add_argument("--out", required=True, help="output checkpoint JSON")
    p.add_argument("--log", help="optional per-iteration CSV log (includes wall_ms)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate one scheduler")
    _add_config_flags(p)
    p.add_argument(
        "--scheduler", required=True, choices=[k.value for k in sched.SchedulerKind]
    )
    p.add_argument("--ckpt", help="checkpoint file (required for drn)")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--out", required=True, help="output file (.csv or .json)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="sweep one scarcity axis")
    _add_config_flags(p)
    p.add_argument("--axis", required=True, choices=sorted(AXIS_ALIASES))
    p.add_argument("--from", dest="from_value", type=int, required=True)
    p.add_argument("--to", dest="to_value", type=int, required=True)
    p.add_argument(
        "--schedulers", required=True,
        help="comma-separated list, e.g. all,max,min,total,drn",
    )
    p.add_argument(
        "--ckpt",
        help="checkpoint for drn; may contain {value} to select one per axis point",
    )
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--out", required=True, help="output file (.csv or .json)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p.add_argument("--profile", choices=["mini", "full"], default="mini")
    p.set_defaults(func=_cmd_grad_check)

    return parser


def _resolve_config(args) -> ScenarioConfig:
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        config = ScenarioConfig.from_dict(data)
    else:
        config = PROFILES[args.profile]
    if args.seed is not None:
        config = replace(config, seed=args.seed)
        config.validate()
    return config


def _out_format(path: str) -> str:
    return "json" if path.endswith(".json") else "csv"


def _cmd_gen(args) -> int:
    config = _resolve_config(args)
    scenario = generate_scenario(config)
    scenario.save(args.out, header=config.to_dict())
    print(f"wrote scenario n={scenario.n} l={scenario.l} s={scenario.s} to {args.out}")
    return 0


def _cmd_train(args) -> int:
    config = _resolve_config(args)
    cfg = trainer.TrainConfig(
        scenario=config,
        iterations=args.iters,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=config.seed,
    )
    params, log = trainer.train(cfg)
    drn.save_checkpoint(params, args.out, metadata={"train_config": _train_config_dict(cfg)})
    if args.log:
        with open(args.log, "w") as fh:
            fh.write(f"# {json.dumps(_train_config_dict(cfg), sort_keys=True)}\n")
            fh.write("iteration,loss,n_r,epsilon,wall_ms\n")
            for row in log:
                fh.write(
                    f"{row.iteration},{row.loss},{row.n_r},{row.epsilon},{row.wall_ms}\n"
                )
    tail = log[-min(50, len(log)) :]
    mean_tail = sum(r.n_r for r in tail) / len(tail)
    print(
        f"trained {args.iters} iterations (lr={args.lr}); "
        f"mean accommodated over last {len(tail)}: {mean_tail:.2f}; checkpoint: {args.out}"
    )
    return 0


def _train_config_dict(cfg: trainer.TrainConfig) -> dict:
    return {
        "scenario": cfg.scenario.to_dict(),
        "iterations": cfg.iterations,
        "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate,
        "epsilon_start": cfg.epsilon_start,
        "epsilon_end": cfg.epsilon_end,
        "epsilon_decay_frac": cfg.epsilon_decay_frac,
        "alpha": cfg.reward.alpha,
        "beta": cfg.reward.beta,
        "discount": cfg.reward.discount,
        "replay_capacity": cfg.replay_capacity,
        "seed": cfg.seed,
    }


def _cmd_eval(args) -> int:
    kind = sched.SchedulerKind.parse(args.scheduler)
    if kind is sched.SchedulerKind.DRN and not args.ckpt:
        raise _UsageError("--scheduler drn requires --ckpt")
    config = _resolve_config(args)
    params = None
    if kind is sched.SchedulerKind.DRN:
        params = drn.load_checkpoint(args.ckpt)
        params.check_scenario(generate_scenario(config))
    result = harness.evaluate(kind, config, args.episodes, drn_params=params)

    if _out_format(args.out) == "json":
        doc = {
            "config": config.to_dict(),
            "scheduler": result.scheduler,
            "episodes": result.episodes,
            "mean_accommodated": result.mean_accommodated,
            "std": result.std,
            "per_episode": result.per_episode.tolist(),
        }
        Path(args.out).write_text(json.dumps(doc, sort_keys=True) + "\n")
    else:
        with open(args.out, "w") as fh:
            fh.write(f"# {json.dumps(config.to_dict(), sort_keys=True)}\n")
            fh.write("scheduler,episodes,mean_accommodated,std,seed\n")
            fh.write(
                f"{result.scheduler},{result.episodes},"
                f"{result.mean_accommodated},{result.std},{config.seed}\n"
            )
    print(
        f"{result.scheduler}: mean accommodated {result.mean_accommodated:.2f} "
        f"(std {result.std:.2f}) over {result.episodes} episodes -> {args.out}"
    )
    return 0


def _cmd_sweep(args) -> int:
    config = _resolve_config(args)
    axis = AXIS_ALIASES[args.axis]
    step = 1 if args.to_value >= args.from_value else -1
    values = tuple(range(args.from_value, args.to_value + step, step))
    kinds = [sched.SchedulerKind.parse(name) for name in args.schedulers.split(",") if name]
    if not kinds:
        raise _UsageError("--schedulers must name at least one scheduler")
    provider = None
    if sched.SchedulerKind.DRN in kinds:
        if not args.ckpt:
            raise _UsageError("sweeping drn requires --ckpt")
        cache: dict[str, drn.DrnParams] = {}

        def provider(point: ScenarioConfig) -> drn.DrnParams:
            path = args.ckpt.format(value=_axis_point_value(axis, point))
            if path not in cache:
                cache[path] = drn.load_checkpoint(path)
            params = cache[path]
            params.check_scenario(generate_scenario(point))
            return params

    spec = harness.SweepSpec(axis=axis, values=values, base=config)
    rows = harness.sweep(spec, kinds, episodes=args.episodes, drn_provider=provider)
    harness.export_results(
        rows,
        args.out,
        fmt=_out_format(args.out),
        header_comment=json.dumps(config.to_dict(), sort_keys=True),
    )
    print(f"wrote {len(rows)} rows ({len(values)} axis points x {len(kinds)} schedulers) to {args.out}")
    return 0


def _axis_point_value(axis: str, point: ScenarioConfig) -> int:
    if axis == "slice_count":
        return point.l
    if axis == "vnfs_per_slice":
        return point.s
    if axis == "mean_demand":
        return (point.demand_range[0] + point.demand_range[1]) // 2
    return (point.cap_range[0] + point.cap_range[1]) // 2


def _cmd_grad_check(args) -> int:
    profile = BASE_CONFIG if args.profile == "full" else MINI_CONFIG
    seeds = range(20)
    failed = False
    for name, check in PRIMITIVE_CHECKS.items():
        worst = max(check(seed) for seed in seeds)
        ok = worst < PRIMITIVE_TOLERANCE
        failed |= not ok
        print(f"{name}: max relative error {worst:.3e} ({'pass' if ok else 'FAIL'})")
    net_config = drn.DrnConfig(n=profile.n, l=profile.l, s=profile.s, scale=1.0)
    coords = 40 if args.profile == "mini" else 6
    worst = max(check_full_network(net_config, seed, max_coords=coords) for seed in range(3))
    ok = worst < NETWORK_TOLERANCE
    failed |= not ok
    print(f"full network ({args.profile}): max relative error {worst:.3e} ({'pass' if ok else 'FAIL'})")
    return 2 if failed else 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, CheckpointError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()

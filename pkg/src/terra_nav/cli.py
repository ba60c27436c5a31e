"""Command-line entry points.

Subcommands:
  run                execute one mission from a JSON config and export logs
  train-model-error  train the lateral-deviation GP and save the artifact
  bench              run kernel-comparison missions and emit a benchmark CSV
  sweep-retrain      sweep the retrain period and report outcomes

The output directory may be overridden with the TERRA_NAV_OUT environment
variable; all randomness comes from explicit seeds.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import framework, model_error
from .errors import ConfigError, UsageError

OUT_ENV = "TERRA_NAV_OUT"


def _resolve_out(path_str: str) -> Path:
    return Path(os.environ.get(OUT_ENV, path_str))


def _load_config(args) -> framework.MissionConfig:
    if args.config:
        cfg = framework.MissionConfig.from_json(args.config)
    else:
        cfg = framework.MissionConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed, terrain_seed=args.seed)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    log = framework.run_mission(cfg)
    report = framework.compute_metrics(log, log.field)
    out = _resolve_out(args.out)
    framework.export(log, report, out)
    (out / "log.bin").write_bytes(framework.log_to_bytes(log))
    print(f"outcome={log.outcome} steps={log.total_steps} "
          f"path_error={report.avg_error_path} "
          f"env_error_sum={report.sum_error_env:.4f}")
    return 0 if log.outcome == "reached" else 1


def _cmd_train_model_error(args) -> int:
    oracle = model_error.PerturbationOracle(noise_std=args.noise_std)
    model = model_error.train_model_error(oracle, seed=args.seed)
    holdout = model_error.evaluate_holdout(model, oracle, oracle.ranges)
    out = Path(os.environ.get(OUT_ENV, ".")) / args.out \
        if os.environ.get(OUT_ENV) else Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model_error.save_artifact(model, out, extra=holdout)
    print(f"saved {out}  mae={holdout['mae']:.3e} "
          f"mean_true={holdout['mean_true']:.3e} ratio={holdout['ratio']:.1f}x")
    return 0


def _cmd_bench(args) -> int:
    kernels = [k.strip() for k in args.kernels.split(",") if k.strip()]
    for k in kernels:
        if k not in framework.KERNEL_CHOICES:
            raise UsageError(f"unknown kernel {k!r}")
    base = _load_config(args)
    out = _resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for kernel in kernels:
        for trial in range(args.trials):
            cfg = dataclasses.replace(base, kernel=kernel,
                                      seed=base.seed + trial,
                                      terrain_seed=base.terrain_seed + trial)
            log = framework.run_mission(cfg)
            rep = framework.compute_metrics(log, log.field)
            rows.append([kernel, trial, log.outcome, log.total_steps,
                         rep.avg_error_path, rep.avg_std_path,
                         rep.sum_error_env, rep.avg_error_env,
                         rep.avg_std_env, f"{log.wall_time:.2f}"])
            print(f"kernel={kernel} trial={trial} outcome={log.outcome} "
                  f"steps={log.total_steps}")
    path = out / "bench.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kernel", "trial", "outcome", "steps", "avg_error_path",
                    "avg_std_path", "sum_error_env", "avg_error_env",
                    "avg_std_env", "wall_time_s"])
        w.writerows(rows)
    print(f"wrote {path}")
    return 0


def _cmd_sweep_retrain(args) -> int:
    if args.min < 1 or args.max < args.min:
        raise UsageError("require 1 <= min <= max")
    base = _load_config(args)
    out = _resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for period in range(args.min, args.max + 1, args.step):
        cfg = dataclasses.replace(base, retrain_period=period)
        log = framework.run_mission(cfg)
        rep = framework.compute_metrics(log, log.field)
        rows.append([period, log.outcome, log.total_steps,
                     rep.avg_error_path, rep.sum_error_env])
        print(f"retrain_period={period} outcome={log.outcome} "
              f"steps={log.total_steps}")
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["retrain_period", "outcome", "steps", "avg_error_path",
                    "sum_error_env"])
        w.writerows(rows)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="terra-nav",
        description="GP terrain learning + bipedal step-planner simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one mission")
    run.add_argument("--config", default=None, help="mission JSON config")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default="out")
    run.set_defaults(fn=_cmd_run)

    tme = sub.add_parser("train-model-error",
                         help="train the deviation GP artifact")
    tme.add_argument("--out", default="model_error.json")
    tme.add_argument("--seed", type=int, default=0)
    tme.add_argument("--noise-std", type=float, default=1e-3)
    tme.set_defaults(fn=_cmd_train_model_error)

    bench = sub.add_parser("bench", help="kernel benchmark missions")
    bench.add_argument("--kernels", default="rbf,nn,attentive")
    bench.add_argument("--trials", type=int, default=3)
    bench.add_argument("--config", default=None)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--out", default="out")
    bench.set_defaults(fn=_cmd_bench)

    sweep = sub.add_parser("sweep-retrain", help="retrain-period sweep")
    sweep.add_argument("--min", type=int, required=True)
    sweep.add_argument("--max", type=int, required=True)
    sweep.add_argument("--step", type=int, default=1)
    sweep.add_argument("--config", default=None)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out", default="out")
    sweep.set_defaults(fn=_cmd_sweep_retrain)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

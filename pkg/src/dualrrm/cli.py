"""Experiment harness.

Subcommands:
    generate       draw and cache a train or test dataset
    train          run the ascent loop, write checkpoints and the log CSV
    eval           execute a policy over the test set, write metric CSVs
    baselines      run the full policy comparison suite
    gradcheck      finite-difference verification of the episode gradient
    theorem-suite  dual-dynamics law battery on freshly executed traces

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O
error.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .baselines import FullReusePolicy, ItlinqPolicy
from .config import ExperimentConfig, config_hash, config_to_dict, load_config
from .core import metrics
from .datasets import dataset_dir, generate_dataset, load_dataset, write_dataset
from .errors import (
    CheckpointDimMismatch,
    ConfigError,
    DegenerateNorm,
    NonFiniteActivation,
    NonFiniteLoss,
    PlacementInfeasible,
    RrmError,
    UnsupportedDistribution,
    ZeroChannel,
)
from .execution import GnnPolicy, evaluate_suite
from .policy import Checkpoint, load_checkpoint, require_dims, save_checkpoint
from .reporting import (
    FileMeta,
    METRICS_HEADER,
    POOLED_LABEL,
    RATES_HEADER,
    TIMING_HEADER,
    metrics_row,
    rates_rows,
    write_cdf,
    write_csv,
    write_trace,
    write_training_log,
)
from .training import train
from .verify import dual_trace_battery, finite_difference_check

_CONFIG_ERRORS = (
    ConfigError,
    UnsupportedDistribution,
    PlacementInfeasible,
    CheckpointDimMismatch,
)
_NUMERIC_ERRORS = (NonFiniteLoss, NonFiniteActivation, DegenerateNorm, ZeroChannel)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _load_experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, train=replace(cfg.train, seed=None))
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    if getattr(args, "m_override", None) is not None:
        cfg = cfg.with_m(args.m_override)
    return cfg.validate()


def _meta(cfg: ExperimentConfig) -> FileMeta:
    return FileMeta(
        tool_version=__version__, config_hash=config_hash(cfg), master_seed=cfg.seed
    )


def _policy_for(name: str, cfg: ExperimentConfig, checkpoint_path: str | None):
    if name == "full_reuse":
        return FullReusePolicy(), None
    if name == "itlinq":
        return ItlinqPolicy(cfg.itlinq), None
    if name in ("state_augmented", "early_stop"):
        if checkpoint_path is None:
            raise ConfigError(f"policy {name!r} needs --checkpoint")
        ckpt = load_checkpoint(checkpoint_path)
        require_dims(ckpt.params, cfg.gnn)
        return GnnPolicy(ckpt.params), ckpt
    raise ConfigError(f"unknown policy {name!r}")


def cmd_generate(args) -> int:
    cfg = _load_experiment(args)
    realizations = generate_dataset(cfg, args.split)
    out = write_dataset(cfg, args.split, realizations)
    print(f"wrote {len(realizations)} realizations to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_experiment(args)
    dataset, _ = load_dataset(dataset_dir(cfg, "train"))
    ckpt_dir = Path(cfg.output_dir) / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    init = None
    start_iter = 0
    if args.resume is not None:
        resumed = load_checkpoint(args.resume)
        require_dims(resumed.params, cfg.gnn)
        init, start_iter = resumed.params, resumed.iteration
    echo = config_to_dict(cfg)

    def _save_intermediate(iteration: int, params) -> None:
        save_checkpoint(
            ckpt_dir / f"checkpoint_{iteration:06d}.json",
            Checkpoint(params=params, seed=cfg.seed, iteration=iteration, config_echo=echo),
        )

    params, log = train(
        cfg.train,
        cfg.problem,
        cfg.gnn,
        dataset,
        init=init,
        start_iter=start_iter,
        checkpoint_cb=_save_intermediate if cfg.train.checkpoint_every else None,
    )
    final_iter = cfg.train.resolved_n_iters(len(dataset))
    final_path = ckpt_dir / "checkpoint_final.json"
    save_checkpoint(
        final_path,
        Checkpoint(params=params, seed=cfg.seed, iteration=final_iter, config_echo=echo),
    )
    write_training_log(
        Path(cfg.output_dir) / "training_log.csv", log, _meta(cfg),
        emit_timing=args.timing,
    )
    print(f"trained {len(log.iterations)} iterations; checkpoint at {final_path}")
    return EXIT_OK


def _eval_policies(cfg: ExperimentConfig, policies, args) -> int:
    dataset, manifest = load_dataset(dataset_dir(cfg, "test"))
    meta = _meta(cfg)
    eval_dir = Path(cfg.output_dir) / "eval"
    metric_rows, user_rows, timing_rows = [], [], []
    for name, policy in policies:
        t0 = time.perf_counter()
        run_cfg = cfg.execution
        if name.startswith("early_stop_"):
            run_cfg = replace(run_cfg, t_stop=int(name.rsplit("_", 1)[1]))
        summary, traces = evaluate_suite(
            policy, dataset, run_cfg, cfg.problem, workers=args.workers
        )
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        for r, trace in enumerate(traces):
            metric_rows.append(
                metrics_row(name, r, metrics(trace.final_ergodic, cfg.problem))
            )
        metric_rows.append(metrics_row(name, POOLED_LABEL, summary))
        user_rows.extend(rates_rows(name, traces))
        timing_rows.append(
            [cfg.problem.m, name, elapsed_ms / (len(dataset) * run_cfg.T), len(dataset) * run_cfg.T]
        )
        if args.export_trace > 0:
            for r in range(min(args.export_trace, len(traces))):
                write_trace(
                    eval_dir / f"trace_{name}_r{r:03d}.csv",
                    traces[r], run_cfg, cfg.problem.p_max, meta,
                )
        if args.export_cdf:
            write_cdf(eval_dir / f"cdf_{name}.csv", traces, meta)
        print(
            f"{name}: mean={summary.mean_rate:.3f} min={summary.min_rate_trimmed:.3f} "
            f"p5={summary.p5_rate:.3f} feas={summary.feasibility_fraction:.3f} "
            f"({manifest['count']} realizations)"
        )
    write_csv(eval_dir / "metrics.csv", METRICS_HEADER, metric_rows, meta)
    write_csv(eval_dir / "rates.csv", RATES_HEADER, user_rows, meta)
    if args.export_timing:
        write_csv(eval_dir / "timing.csv", TIMING_HEADER, timing_rows, meta)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_experiment(args)
    name = args.policy
    policy, _ = _policy_for(name, cfg, args.checkpoint)
    if name == "early_stop":
        if args.t_stop is None:
            raise ConfigError("policy early_stop needs --t-stop")
        name = f"early_stop_{args.t_stop}"
    return _eval_policies(cfg, [(name, policy)], args)


def cmd_baselines(args) -> int:
    cfg = _load_experiment(args)
    policies = [
        ("full_reuse", FullReusePolicy()),
        ("itlinq", ItlinqPolicy(cfg.itlinq)),
    ]
    if args.checkpoint is not None:
        gnn_policy, _ = _policy_for("state_augmented", cfg, args.checkpoint)
        horizon = cfg.execution.T
        policies.append(("state_augmented", gnn_policy))
        for t_stop in (0, horizon // 5, horizon):
            policies.append((f"early_stop_{t_stop}", gnn_policy))
    return _eval_policies(cfg, policies, args)


def cmd_gradcheck(args) -> int:
    cfg = _load_experiment(args)
    report = finite_difference_check(
        replace(cfg.problem, m=args.m),
        cfg.gnn,
        n_steps=args.steps,
        n_coords=args.coords,
        seed=cfg.seed,
    )
    for check in report.checks:
        print(
            f"{check.tensor}{list(check.index)}: analytic={check.analytic:.6e} "
            f"numeric={check.numeric:.6e} rel_err={check.rel_err:.3e}"
        )
    print(f"max relative error over {len(report.checks)} coordinates: "
          f"{report.max_rel_err:.3e}")
    if not report.passed(args.tol):
        print("GRADCHECK FAIL")
        return EXIT_NUMERIC
    print("GRADCHECK PASS")
    return EXIT_OK


def cmd_theorem_suite(args) -> int:
    cfg = _load_experiment(args)
    dataset, _ = load_dataset(dataset_dir(cfg, "test"))
    policy, _ = _policy_for("state_augmented", cfg, args.checkpoint)
    subset = dataset[: args.realizations]
    _, traces = evaluate_suite(policy, subset, cfg.execution, cfg.problem,
                               workers=args.workers)
    all_ok = True
    for r, trace in enumerate(traces):
        for result in dual_trace_battery(trace, cfg.execution, cfg.problem):
            status = "PASS" if result.passed else "FAIL"
            all_ok &= result.passed
            print(f"trace {r:03d} {result.name}: {status} ({result.detail})")
    print("THEOREM-SUITE", "PASS" if all_ok else "FAIL")
    return EXIT_OK if all_ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualrrm",
        description="Constraint-aware power control experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, workers: bool = False) -> None:
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--m-override", type=int, default=None,
                       help="override the number of user pairs")
        if workers:
            p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("generate", help="draw and cache a dataset split")
    common(p)
    p.add_argument("--split", choices=("train", "test"), required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the policy on the cached train split")
    common(p)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--timing", action="store_true",
                   help="fill the wall_ms column (breaks byte-reproducibility)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate one policy on the test split")
    common(p, workers=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument(
        "--policy",
        default="state_augmented",
        choices=("state_augmented", "full_reuse", "itlinq", "early_stop"),
    )
    p.add_argument("--t-stop", type=int, default=None)
    p.add_argument("--export-trace", type=int, default=0, metavar="N",
                   help="write per-step traces for the first N realizations")
    p.add_argument("--export-cdf", action="store_true")
    p.add_argument("--export-timing", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baselines", help="run the policy comparison suite")
    common(p, workers=True)
    p.add_argument("--checkpoint", default=None,
                   help="adds the trained policy and its early-stop ablations")
    p.add_argument("--export-trace", type=int, default=0)
    p.add_argument("--export-cdf", action="store_true")
    p.add_argument("--export-timing", action="store_true")
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)
    p.add_argument("--m", type=int, default=6)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--coords", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("theorem-suite", help="dual-dynamics law battery")
    common(p, workers=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--realizations", type=int, default=8)
    p.set_defaults(func=cmd_theorem_suite)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RrmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

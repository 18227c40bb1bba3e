"""Command-line pipeline: train, prune, eval, report.

Exit codes: 0 success, 1 runtime failure, 2 configuration/usage error.
All outputs are byte-reproducible for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import checkpoint as ckpt
from . import reports
from .config import config_to_jsonable, load_config, require, run_config_from
from .datasets import gen_synthetic, load_idx
from .errors import ConfigError
from .importance import score_all, write_energy_csv
from .model import build_model, parse_architecture, parse_input_shape
from .pruning import count_flops, prune_loop, write_flops_csv, write_plan_file
from .training import evaluate_accuracy, train, write_metrics_csv


def _build_datasets(cfg):
    task = require(cfg, "data", "task")
    if task == "idx":
        train_set = load_idx(require(cfg, "data", "images"), require(cfg, "data", "labels"))
        eval_set = load_idx(
            require(cfg, "data", "eval_images"), require(cfg, "data", "eval_labels")
        )
    else:
        data = cfg["data"]
        num_classes = data.get("num_classes")
        train_set = gen_synthetic(
            task, require(cfg, "data", "n"), require(cfg, "data", "seed"),
            num_classes=num_classes, split="train",
        )
        eval_set = gen_synthetic(
            task,
            data.get("eval_n", max(1, data["n"] // 4)),
            data.get("eval_seed", data["seed"] + 1),
            num_classes=num_classes,
            split="eval",
        )
    return train_set, eval_set


def _build_model(cfg, fallback_seed):
    specs = parse_architecture(require(cfg, "model", "layers"))
    input_shape = parse_input_shape(require(cfg, "model", "input"))
    seed = cfg["model"].get("init_seed", fallback_seed)
    return build_model(specs, input_shape, seed=seed)


def _model_meta(cfg, config, history_plans, baseline_acc=None):
    meta = {
        "config": config_to_jsonable(cfg),
        "history": [ckpt.plan_to_dict(p) for p in history_plans],
    }
    if baseline_acc is not None:
        meta["baseline_eval_acc"] = baseline_acc
    return meta


def cmd_train(args):
    cfg = load_config(args.config, args.override)
    if args.seed is not None:
        cfg.setdefault("train", {})["seed"] = args.seed
    config = run_config_from(cfg)
    train_set, eval_set = _build_datasets(cfg)
    model = _build_model(cfg, config.seed)
    os.makedirs(args.out, exist_ok=True)
    history = train(model, train_set, eval_set, config)
    write_metrics_csv(history, os.path.join(args.out, "metrics.csv"))
    criterion = config.criterion if model.pairs else "out_in_channel"
    if model.pairs:
        groups = score_all(model, criterion)
        write_energy_csv(model, groups, os.path.join(args.out, "energy.csv"))
    acc = evaluate_accuracy(model, eval_set)
    ckpt.save_checkpoint(
        model, _model_meta(cfg, config, [], acc), os.path.join(args.out, "checkpoint.ckpt")
    )
    print(f"final eval accuracy: {acc!r}")
    return 0


def cmd_prune(args):
    cfg = load_config(args.config, args.override)
    config = run_config_from(cfg)
    model, meta = ckpt.load_checkpoint(args.checkpoint)
    expected = [s["kind"] for s in parse_architecture(require(cfg, "model", "layers"))]
    actual = [l.kind for l in model.layers]
    if expected != actual:
        raise ConfigError(
            f"checkpoint architecture {actual} does not match config {expected}"
        )
    train_set, eval_set = _build_datasets(cfg)
    os.makedirs(args.out, exist_ok=True)

    baseline = count_flops(model)
    baseline_acc = evaluate_accuracy(model, eval_set)
    rows = [
        "iteration,target_ratio,achieved_ratio,capped_pairs,flops,params,"
        "acc_after_surgery,acc_after_fine_tune",
        f"0,0.0,0.0,,{baseline.total_flops},{baseline.total_params},"
        f"{baseline_acc!r},{baseline_acc!r}",
    ]

    def fine_tune_cb(m, iteration):
        train(m, train_set, eval_set, config, epochs=config.fine_tune_epochs)

    final, iteration_reports = prune_loop(
        model,
        config.flops_targets,
        config.criterion,
        fine_tune=fine_tune_cb if config.fine_tune_epochs > 0 else None,
        evaluate=lambda m: evaluate_accuracy(m, eval_set),
    )
    plans = [r.plan for r in iteration_reports]
    for r in iteration_reports:
        write_plan_file(r.plan, os.path.join(args.out, f"plan_{r.iteration}.csv"))
        write_flops_csv(r.flops, os.path.join(args.out, f"flops_{r.iteration}.csv"))
        acc_ft = r.accuracy_after_fine_tune
        if acc_ft is None:
            acc_ft = r.accuracy_after_surgery
        rows.append(
            f"{r.iteration},{config.flops_targets[r.iteration - 1]!r},"
            f"{r.plan.achieved_flops_ratio!r},"
            f"{';'.join(str(p) for p in r.plan.capped_pairs)},"
            f"{r.flops.total_flops},{r.flops.total_params},"
            f"{r.accuracy_after_surgery!r},{acc_ft!r}"
        )
    with open(os.path.join(args.out, "iterations.csv"), "w") as f:
        f.write("\n".join(rows) + "\n")
    if final.pairs:
        groups = score_all(final, config.criterion)
        write_energy_csv(final, groups, os.path.join(args.out, "energy.csv"))
    prior = meta.get("history", []) if isinstance(meta, dict) else []
    new_meta = _model_meta(cfg, config, [], baseline_acc)
    new_meta["history"] = prior + [ckpt.plan_to_dict(p) for p in plans]
    ckpt.save_checkpoint(final, new_meta, os.path.join(args.out, "checkpoint.ckpt"))
    print(f"pruned to {plans[-1].achieved_flops_ratio!r} of original FLOPs removed"
          if plans else "no pruning iterations configured")
    return 0


def cmd_eval(args):
    cfg = load_config(args.config, args.override)
    model, _ = ckpt.load_checkpoint(args.checkpoint)
    _, eval_set = _build_datasets(cfg)
    acc = evaluate_accuracy(model, eval_set)
    print(f"eval accuracy: {acc!r}")
    return 0


def cmd_report(args):
    os.makedirs(args.out, exist_ok=True)
    curve_series = []
    energy_series = []
    for run_dir in args.run_dir:
        name = os.path.basename(os.path.normpath(run_dir))
        curve_series.append((name, reports.curve_points(run_dir)))
        energy_series.append((name, reports.energy_values(run_dir)))
    reports.write_accuracy_curve_csv(
        curve_series, os.path.join(args.out, "accuracy_vs_flops.csv")
    )
    reports.write_energy_hist_csv(
        energy_series, os.path.join(args.out, "energy_hist.csv")
    )
    line_series = [
        (name, [p[0] for p in pts], [p[1] for p in pts]) for name, pts in curve_series
    ]
    with open(os.path.join(args.out, "accuracy_vs_flops.svg"), "w") as f:
        f.write(
            reports.svg_line_chart(
                line_series,
                "accuracy (no fine-tuning) vs pruned FLOPs",
                "pruned FLOPs ratio",
                "eval accuracy",
            )
        )
    with open(os.path.join(args.out, "energy_hist.svg"), "w") as f:
        f.write(
            reports.svg_histogram(
                energy_series, "out-in-channel energy distribution", "group energy"
            )
        )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="oicprune",
        description="Structured-sparsity training and out-in-channel pruning toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="INI config path")
        p.add_argument(
            "--override", action="append", default=[], metavar="KEY=VALUE",
            help="config override, repeatable (e.g. lambda_s=0 or train.lr=0.05)",
        )

    p = sub.add_parser("train", help="train a model from scratch")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override train.seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("prune", help="iterative global greedy pruning")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="build comparison reports from run dirs")
    p.add_argument("--run-dir", action="append", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

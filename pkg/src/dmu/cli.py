"""Command line entry point: ``dmu <command> ...`` or ``python -m dmu``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .cells import build_model, count_weights, save_params
from .experiment import (
    CellEntry, ExperimentSpec, default_workers, emit_reports, load_spec,
    run_experiment,
)
from .scaling import interpolation_chain_check
from .tasks import dump_jsonl, make_task
from .training import TrainConfig, run_until_stop

CELL_CHOICES = ("dmu", "dmu-nos", "rnn", "lstm", "gru")


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _cell_entry(text):
    kind, _, arch = text.partition(":")
    if kind not in CELL_CHOICES:
        raise argparse.ArgumentTypeError(
            f"unknown cell kind {kind!r} (choose from {', '.join(CELL_CHOICES)})")
    if not arch:
        raise argparse.ArgumentTypeError(f"cell {text!r} needs an architecture, e.g. dmu:5,5")
    if kind == "dmu-nos":
        return CellEntry("dmu", _ints(arch), scaling=False)
    return CellEntry(kind, _ints(arch))


def _add_task_args(p):
    p.add_argument("--task", choices=("adding", "tempord", "noiseseq"), required=True)
    p.add_argument("--scale", choices=("full", "desk"), default="full",
                   help="full-size task or the scaled-down desk variant")
    p.add_argument("--n", type=int, default=None, help="NoiseSeq alphabet size (default 50)")


def _add_train_args(p):
    d = TrainConfig()
    p.add_argument("--epochs", type=int, default=d.max_epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--samples-per-epoch", type=int, default=d.samples_per_epoch)
    p.add_argument("--val-size", type=int, default=d.val_size)
    p.add_argument("--test-size", type=int, default=d.test_size)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=d.optimizer)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--stop-threshold", type=float, default=d.stop_threshold)
    p.add_argument("--p", type=float, default=d.p)
    p.add_argument("--epsilon", type=float, default=d.epsilon)
    p.add_argument("--z-bias-offset", type=float, default=d.z_bias_offset)


def _task_from_args(args):
    overrides = {"n": args.n} if (args.task == "noiseseq" and args.n) else {}
    return make_task(args.task, args.scale, **overrides)


def _config_from_args(args, **extra):
    return TrainConfig(
        batch_size=args.batch_size, max_epochs=args.epochs,
        samples_per_epoch=args.samples_per_epoch, val_size=args.val_size,
        test_size=args.test_size, stop_threshold=args.stop_threshold,
        optimizer=args.optimizer, learning_rate=args.lr, clip_norm=args.clip_norm,
        p=args.p, epsilon=args.epsilon, z_bias_offset=args.z_bias_offset, **extra)


def build_parser():
    parser = argparse.ArgumentParser(prog="dmu", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a single model and print per-epoch losses")
    _add_task_args(p)
    p.add_argument("--cell", type=_cell_entry, required=True,
                   help="kind:widths, e.g. dmu:5,5 or lstm:2,2; dmu-nos disables scaling")
    p.add_argument("--seed", type=int, default=0, help="data seed")
    p.add_argument("--model-seed", type=int, default=0)
    p.add_argument("--save", default=None, help="write trained parameters to this JSON file")
    _add_train_args(p)

    p = sub.add_parser("experiment", help="multi-seed runs with threshold-reach reports")
    p.add_argument("--config", default=None, help="JSON file with ExperimentSpec fields")
    p.add_argument("--task", choices=("adding", "tempord", "noiseseq"))
    p.add_argument("--scale", choices=("full", "desk"), default="full")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--cells", type=_cell_entry, nargs="+", default=None)
    p.add_argument("--runs", type=int, default=None, help="runs per cell (default 51)")
    p.add_argument("--thresholds", type=_floats, default=None)
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel worker processes (default $DMU_WORKERS or 1)")
    p.add_argument("--out", default=None, help="output directory")
    _add_train_args(p)

    p = sub.add_parser("count-weights", help="trainable parameters of cell plus readout")
    _add_task_args(p)
    p.add_argument("--cell", choices=("dmu", "rnn", "lstm", "gru"), required=True)
    p.add_argument("--arch", type=_ints, required=True, help="e.g. 5,5")

    p = sub.add_parser("gen-data", help="dump generated samples as JSON lines")
    _add_task_args(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="file path (default stdout)")

    p = sub.add_parser("check-scaling", help="print the S0..S4 factors for a norm list")
    p.add_argument("--norms", type=_floats, required=True, help="e.g. 4,2,1")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--k", type=int, default=1)
    return parser


def cmd_train(args):
    task = _task_from_args(args)
    entry = args.cell
    cfg = _config_from_args(args, seed=args.seed, scaling=entry.scaling)
    model = build_model(entry.cell, entry.arch, task.input_width, task.output_width,
                        np.random.default_rng(args.model_seed), z_bias_offset=cfg.z_bias_offset)
    result = run_until_stop(model, task, cfg)
    print("epoch train_loss val_loss scale_S")
    for r in result.history:
        print(f"{r.epoch} {r.train_loss:.6g} {r.val_loss:.6g} {r.scale_S:.6g}")
    print(f"status {result.status} test_loss {result.test_loss:.6g}")
    if args.save:
        save_params(model, args.save)
    return 0 if result.status != "diverged" else 1


def cmd_experiment(args, parser):
    if args.config:
        spec = load_spec(args.config)
    else:
        if not args.task or not args.cells:
            parser.error("experiment needs --config or both --task and --cells")
        task = {"kind": args.task, "scale": args.scale}
        if args.task == "noiseseq" and args.n:
            task["n"] = args.n
        spec = ExperimentSpec(task=task, cells=args.cells, train=_config_from_args(args))
    if args.runs is not None:
        spec.runs = args.runs
    if args.thresholds is not None:
        spec.thresholds = tuple(args.thresholds)
    if args.seed is not None:
        spec.master_seed = args.seed
    if args.out is not None:
        spec.output = args.out
    spec.__post_init__()
    out = spec.output or "dmu-experiment"
    workers = args.workers if args.workers is not None else default_workers()
    reports, curves = run_experiment(spec, workers=workers)
    emit_reports(reports, curves, out, spec.thresholds, spec)
    for label, cs in curves.items():
        reached = ", ".join(f"{c.threshold:g}: {c.counts[-1] if c.counts else 0}" for c in cs)
        print(f"{label}: runs reaching threshold -> {reached}")
    print(f"reports written to {out}")
    return 0


def cmd_count_weights(args):
    task = _task_from_args(args)
    print(count_weights(args.cell, args.arch, task.input_width, task.output_width))
    return 0


def cmd_gen_data(args):
    from .tasks import make_split

    task = _task_from_args(args)
    split = make_split(task, (args.count, 1, 1), args.seed)
    samples = split.train_epoch(1)
    if args.out:
        dump_jsonl(samples, args.out)
    else:
        for s in samples:
            target = s.target if isinstance(s.target, float) else int(s.target)
            sys.stdout.write(json.dumps({"inputs": s.inputs.tolist(), "target": target,
                                         "loss_at": int(s.loss_at)}) + "\n")
    return 0


def cmd_check_scaling(args):
    factors = interpolation_chain_check(args.norms, args.p, args.epsilon, args.k)
    for name, value in factors.items():
        print(f"{name} {value:.17g}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(args)
        if args.command == "experiment":
            return cmd_experiment(args, parser)
        if args.command == "count-weights":
            return cmd_count_weights(args)
        if args.command == "gen-data":
            return cmd_gen_data(args)
        return cmd_check_scaling(args)
    except ValueError as exc:
        print(f"dmu: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Multi-seed experiments, threshold-reach curves and report files.

A threshold-reach curve counts, for every epoch, how many runs have had a
validation loss at or below the threshold in that epoch or earlier.

Output files (all floats written with 17 significant digits):

``runs.csv``
    run_id, seed, cell, epoch, train_loss, val_loss, scale_S, status
``finals.csv``
    run_id, seed, model_seed, cell, status, epochs, final_train_loss,
    test_loss, then one ``reach_<threshold>`` column per threshold
``curves.csv``
    cell, threshold, epoch, cumulative_count
``summary.json``
    best/mean/std of final train loss and test loss per cell
``curves_<cell>.dat``
    whitespace table for gnuplot: epoch then one count column per threshold
``metadata.json``
    the spec and a timestamp; the only file that differs between reruns
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cells import CELL_KINDS, build_model
from .tasks import make_task
from .training import TrainConfig, run_until_stop

__all__ = [
    "CellEntry",
    "ExperimentSpec",
    "RunReport",
    "ThresholdCurve",
    "run_seeds",
    "run_experiment",
    "threshold_curves",
    "emit_reports",
    "load_spec",
    "default_workers",
    "DEFAULT_THRESHOLDS",
]

DEFAULT_THRESHOLDS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
WORKERS_ENV = "DMU_WORKERS"


@dataclass
class CellEntry:
    cell: str
    arch: tuple
    scaling: bool = True
    label: str = None

    def __post_init__(self):
        if self.cell not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {self.cell!r}")
        self.arch = tuple(int(a) for a in self.arch)
        if self.label is None:
            self.label = self.cell if (self.scaling or self.cell != "dmu") else "dmu_nos"


@dataclass
class ExperimentSpec:
    task: dict
    cells: list
    runs: int = 51
    thresholds: tuple = DEFAULT_THRESHOLDS
    train: TrainConfig = field(default_factory=TrainConfig)
    master_seed: int = 0
    output: str = None

    def __post_init__(self):
        self.cells = [c if isinstance(c, CellEntry) else CellEntry(**c) for c in self.cells]
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        self.thresholds = tuple(float(t) for t in self.thresholds)
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if any(a <= b for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly decreasing")
        labels = [c.label for c in self.cells]
        if len(set(labels)) != len(labels):
            raise ValueError("cell labels must be unique")

    def make_task(self):
        params = dict(self.task)
        return make_task(params.pop("kind"), params.pop("scale", "full"), **params)

    def to_dict(self):
        d = asdict(self)
        d["thresholds"] = list(self.thresholds)
        return d


def load_spec(path):
    """Read an :class:`ExperimentSpec` from a JSON file with the same fields."""
    with open(path) as fh:
        return ExperimentSpec(**json.load(fh))


def default_workers():
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


@dataclass
class RunReport:
    run_id: int
    cell: str
    seed: int
    model_seed: int
    history: list
    status: str
    test_loss: float
    first_reach: dict = field(default_factory=dict)

    @property
    def final_train_loss(self):
        return self.history[-1].train_loss if self.history else math.nan


@dataclass
class ThresholdCurve:
    threshold: float
    counts: list


def run_seeds(master_seed, run_id, cell_index):
    """Per-run ``(data_seed, model_seed)`` from a counter-keyed split of the master seed.

    Every cell sees the same data for a given run id.
    """
    data = np.random.SeedSequence(int(master_seed), spawn_key=(0, run_id))
    model = np.random.SeedSequence(int(master_seed), spawn_key=(1, cell_index, run_id))
    return int(data.generate_state(1, np.uint32)[0]), int(model.generate_state(1, np.uint32)[0])


def first_reach(history, thresholds):
    out = {}
    for th in thresholds:
        out[th] = next((r.epoch for r in history if r.val_loss <= th), None)
    return out


def train_one(task, entry, config, model_seed):
    """Default trainer: fresh model, then :func:`run_until_stop`."""
    model = build_model(entry.cell, entry.arch, task.input_width, task.output_width,
                        np.random.default_rng(model_seed), z_bias_offset=config.z_bias_offset)
    return run_until_stop(model, task, config)


def _job(args):
    spec_task, entry, config, run_id, cell_index, master_seed, thresholds, trainer = args
    data_seed, model_seed = run_seeds(master_seed, run_id, cell_index)
    cfg = TrainConfig(**{**asdict(config), "seed": data_seed, "scaling": entry.scaling})
    try:
        result = trainer(spec_task, entry, cfg, model_seed)
        history, status, test_loss = result.history, result.status, result.test_loss
    except (FloatingPointError, ValueError, ArithmeticError) as exc:
        history, status, test_loss = [], f"failed: {exc}", math.nan
    reach = first_reach(history, thresholds)
    if status == "diverged" or status.startswith("failed"):
        reach = {th: None for th in thresholds}
    return RunReport(run_id, entry.label, data_seed, model_seed, history, status, test_loss, reach)


def run_experiment(spec, workers=None, trainer=train_one):
    """Train ``spec.runs`` seeds for every cell entry; return ``(reports, curves)``.

    ``curves`` maps cell label to one :class:`ThresholdCurve` per threshold.
    """
    task = spec.make_task()
    jobs = [
        (task, entry, spec.train, run_id, ci, spec.master_seed, spec.thresholds, trainer)
        for ci, entry in enumerate(spec.cells)
        for run_id in range(spec.runs)
    ]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_job, jobs))
    else:
        reports = [_job(j) for j in jobs]
    return reports, threshold_curves(reports, spec.thresholds, [c.label for c in spec.cells])


def threshold_curves(reports, thresholds, labels=None):
    if labels is None:
        labels = list(dict.fromkeys(r.cell for r in reports))
    n_epochs = max((len(r.history) for r in reports), default=0)
    curves = {}
    for label in labels:
        mine = [r for r in reports if r.cell == label]
        curves[label] = []
        for th in thresholds:
            hits = np.zeros(n_epochs + 1, dtype=int)
            for r in mine:
                e = r.first_reach.get(th)
                if e is not None:
                    hits[e] += 1
            curves[label].append(ThresholdCurve(th, np.cumsum(hits)[1:].tolist()))
    return curves


def _f(x):
    return "%.17g" % x if x is not None else ""


def _stats(values):
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=np.float64)
    if v.size == 0:
        return {"best": None, "mean": None, "std": None, "n": 0}
    return {"best": float(v.min()), "mean": float(v.mean()), "std": float(v.std()), "n": int(v.size)}


def summarize(reports, labels, thresholds):
    out = {}
    for label in labels:
        mine = [r for r in reports if r.cell == label]
        out[label] = {
            "runs": len(mine),
            "diverged": sum(r.status not in ("converged", "budget") for r in mine),
            "train_loss": _stats([r.final_train_loss for r in mine]),
            "test_loss": _stats([r.test_loss for r in mine]),
            "reached": {_f(th): sum(r.first_reach.get(th) is not None for r in mine)
                        for th in thresholds},
        }
    return out


def emit_reports(reports, curves, path, thresholds=DEFAULT_THRESHOLDS, spec=None):
    """Write the report files described in the module docstring into ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    thresholds = tuple(thresholds)
    labels = list(curves) if curves else list(dict.fromkeys(r.cell for r in reports))

    with open(path / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "seed", "cell", "epoch", "train_loss", "val_loss", "scale_S", "status"])
        for r in reports:
            for rec in r.history:
                w.writerow([r.run_id, r.seed, r.cell, rec.epoch, _f(rec.train_loss),
                            _f(rec.val_loss), _f(rec.scale_S), r.status])

    with open(path / "finals.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "seed", "model_seed", "cell", "status", "epochs",
                    "final_train_loss", "test_loss", *[f"reach_{_f(t)}" for t in thresholds]])
        for r in reports:
            reach = [r.first_reach.get(t) if r.first_reach.get(t) is not None else ""
                     for t in thresholds]
            w.writerow([r.run_id, r.seed, r.model_seed, r.cell, r.status, len(r.history),
                        _f(r.final_train_loss), _f(r.test_loss), *reach])

    with open(path / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "threshold", "epoch", "cumulative_count"])
        for label in labels:
            for curve in curves.get(label, []):
                for epoch, count in enumerate(curve.counts, start=1):
                    w.writerow([label, _f(curve.threshold), epoch, count])

    for label in labels:
        with open(path / f"curves_{label}.dat", "w") as fh:
            fh.write("# epoch " + " ".join(_f(c.threshold) for c in curves[label]) + "\n")
            n = len(curves[label][0].counts) if curves[label] else 0
            for e in range(n):
                fh.write(f"{e + 1} " + " ".join(str(c.counts[e]) for c in curves[label]) + "\n")

    with open(path / "summary.json", "w") as fh:
        json.dump(summarize(reports, labels, thresholds), fh, indent=2, sort_keys=True)
        fh.write("\n")

    meta = {"generated": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    if spec is not None:
        meta["spec"] = spec.to_dict()
    with open(path / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=str)
        fh.write("\n")
    return path

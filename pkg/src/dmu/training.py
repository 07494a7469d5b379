"""Backpropagation-through-time training with the memory-scaling controller."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .scaling import ScaleController, capture_norms, update_scale
from .tasks import batches, make_split

__all__ = [
    "Optimizer",
    "TrainConfig",
    "EpochRecord",
    "RunResult",
    "adam_step",
    "sgd_step",
    "task_loss",
    "evaluate",
    "train_epoch",
    "run_until_stop",
]


@dataclass
class Optimizer:
    """Adam (with bias correction) or plain SGD over named parameters."""

    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = None
    steps: int = 0
    moments: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.kind!r}")

    def step(self, params):
        if self.kind == "adam":
            adam_step(self, params)
        else:
            sgd_step(self, params)


def _gradients(opt, params):
    grads = [p.adjoint for p in params]
    if opt.clip_norm is not None and math.isfinite(opt.clip_norm):
        total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if total > opt.clip_norm:
            grads = [g * (opt.clip_norm / total) for g in grads]
    return grads


def adam_step(opt, params):
    grads = _gradients(opt, params)
    opt.steps += 1
    t = opt.steps
    c1 = 1.0 - opt.beta1**t
    c2 = 1.0 - opt.beta2**t
    for p, g in zip(params, grads):
        if p.name not in opt.moments:
            opt.moments[p.name] = (np.zeros_like(p.value), np.zeros_like(p.value))
        m, v = opt.moments[p.name]
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p.value -= opt.learning_rate * (m / c1) / (np.sqrt(v / c2) + opt.eps)
        p.zero_adjoint()


def sgd_step(opt, params):
    grads = _gradients(opt, params)
    opt.steps += 1
    for p, g in zip(params, grads):
        p.value -= opt.learning_rate * g
        p.zero_adjoint()


@dataclass
class TrainConfig:
    batch_size: int = 16
    max_epochs: int = 300
    samples_per_epoch: int = 1024
    val_size: int = 256
    test_size: int = 256
    stop_threshold: float = 1e-6
    patience: int = None  # real-data style stopping; unused for synthetic tasks
    seed: int = 0
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    clip_norm: float = None
    scaling: bool = True
    p: float = 1.0
    epsilon: float = 0.2
    z_bias_offset: float = 3.0

    def __post_init__(self):
        if min(self.batch_size, self.samples_per_epoch, self.val_size, self.test_size) < 1:
            raise ValueError("sizes must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if not self.stop_threshold > 0:
            raise ValueError("stop_threshold must be positive")

    def make_optimizer(self):
        return Optimizer(self.optimizer, self.learning_rate, clip_norm=self.clip_norm)

    def make_controller(self, model):
        enabled = self.scaling and model.kind == "dmu"
        return ScaleController(p=self.p, epsilon=self.epsilon, enabled=enabled)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    scale_S: float
    wall_time: float


@dataclass
class RunResult:
    history: list
    status: str
    test_loss: float
    controller: ScaleController
    batches_seen: int = 0


def task_loss(pred, targets, loss_kind):
    if loss_kind == "mse":
        return ad.mse_loss(pred, np.asarray(targets, dtype=np.float64).reshape(-1, 1))
    if loss_kind == "ce":
        return ad.cross_entropy_loss(pred, targets)
    raise ValueError(f"unknown loss {loss_kind!r}")


def evaluate(model, samples, loss_kind, S=1.0, batch_size=256):
    """Mean per-sample loss over ``samples``; runs without a tape."""
    total, count = 0.0, 0
    for xs, ys in batches(samples, batch_size):
        pred, _ = model.forward(xs, S)
        total += float(task_loss(pred, ys, loss_kind).value[0, 0]) * len(ys)
        count += len(ys)
    return total / count


def _finite_params(model):
    return all(np.all(np.isfinite(p.value)) for p in model.params)


def train_epoch(model, ctrl, opt, samples, config, loss_kind, rng=None):
    """One pass over ``samples``; returns ``(mean train loss, controller, batches)``.

    Per minibatch: unroll, final-step loss, backward, read the gradient norms
    at the scaled memory nodes, optimizer step, scale update. A non-finite
    loss stops the epoch and returns ``nan``.
    """
    total, count, n_batches = 0.0, 0, 0
    for xs, ys in batches(samples, config.batch_size, rng):
        with ad.Tape() as tape:
            pred, handles = model.forward(xs, ctrl.S)
            loss = task_loss(pred, ys, loss_kind)
        value = float(loss.value[0, 0])
        if not math.isfinite(value):
            return math.nan, ctrl, n_batches
        tape.backward(loss)
        norms = capture_norms(handles) if handles else []
        opt.step(model.params)
        ctrl = update_scale(ctrl, norms)
        total += value * len(ys)
        count += len(ys)
        n_batches += 1
    return total / count, ctrl, n_batches


def run_until_stop(model, task, config, split=None):
    """Train until validation loss reaches ``config.stop_threshold``.

    Data come from ``make_split(task, ..., config.seed)`` unless a split is
    passed in. Divergence is reported in ``status``, never raised.
    """
    if split is None:
        split = make_split(task, (config.samples_per_epoch, config.val_size, config.test_size),
                           config.seed)
    loss_kind = split.task.loss
    opt = config.make_optimizer()
    ctrl = config.make_controller(model)
    shuffle = np.random.default_rng(np.random.SeedSequence(int(config.seed), spawn_key=(99,)))
    history, status, seen = [], "budget", 0
    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        train_loss, ctrl, n = train_epoch(model, ctrl, opt, split.train_epoch(epoch), config,
                                          loss_kind, shuffle)
        seen += n
        val_loss = math.nan
        if math.isfinite(train_loss) and _finite_params(model):
            val_loss = evaluate(model, split.validation, loss_kind, ctrl.S)
        history.append(EpochRecord(epoch, train_loss, val_loss, ctrl.S,
                                   time.perf_counter() - start))
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            status = "diverged"
            break
        if val_loss <= config.stop_threshold:
            status = "converged"
            break
    test_loss = math.nan
    if status != "diverged" and _finite_params(model):
        test_loss = evaluate(model, split.test, loss_kind, ctrl.S)
    return RunResult(history, status, test_loss, ctrl, seen)

"""Seeded generators for the synthetic long-lag benchmarks.

* Adding: ``[a, b]`` pairs, sum the two ``a`` values marked ``b = 1``.
* TempOrd: 8-symbol one-hot stream, classify the X/Y pattern at three
  random positions into one of 8 classes.
* NoiseSeq: a fixed template whose first symbol is x or y; report it at
  the last step.

Every task emits its loss at the final step only. Generators are pure
functions of their rng, so a seed fully determines a dataset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Sample",
    "AddingTask",
    "TempOrdTask",
    "NoiseSeqTask",
    "Split",
    "gen_adding",
    "gen_tempord",
    "gen_noiseseq",
    "noiseseq_table",
    "make_task",
    "make_split",
    "batches",
    "dump_jsonl",
    "TEMPORD_SYMBOLS",
]

# one-hot layout for TempOrd inputs
TEMPORD_SYMBOLS = ("X", "Y", "a", "b", "c", "d", "E", "B")
_X, _Y, _E, _B = 0, 1, 6, 7
_FILLERS = (2, 3, 4, 5)


@dataclass
class Sample:
    inputs: np.ndarray
    target: object
    loss_at: int

    @property
    def length(self):
        return self.inputs.shape[0]


def gen_adding(T_min, T_max, rng, windows=None):
    """One Adding sample with sequence length uniform in ``[T_min, T_max]``.

    ``windows``, if given, is a pair of inclusive ``(lo, hi)`` position
    ranges for the first and second marker; otherwise both markers are
    drawn uniformly without replacement from the interior positions.
    """
    if not 2 <= T_min <= T_max:
        raise ValueError("need 2 <= T_min <= T_max")
    T = int(rng.integers(T_min, T_max + 1))
    if windows is None:
        if T < 4:
            raise ValueError("two interior markers need T >= 4")
        i, j = rng.choice(np.arange(1, T - 1), size=2, replace=False)
    else:
        (lo1, hi1), (lo2, hi2) = windows
        i = int(rng.integers(lo1, hi1 + 1))
        j = int(rng.integers(lo2, hi2 + 1))
        if i == j or not (0 < i < T - 1 and 0 < j < T - 1):
            raise ValueError("marker windows must give distinct interior positions")
    a = rng.uniform(-1.0, 1.0, size=T)
    b = np.zeros(T)
    b[0] = b[-1] = -1.0
    b[[i, j]] = 1.0
    inputs = np.stack([a, b], axis=1)
    return Sample(inputs, float(a[i] + a[j]), T - 1)


def gen_tempord(rng, length=(100, 110), t1=(10, 20), t2=(33, 43), t3=(66, 76)):
    """One TempOrd sample; the class is ``4 s1 + 2 s2 + s3`` with X=0, Y=1."""
    T = int(rng.integers(length[0], length[1] + 1))
    pos = [int(rng.integers(lo, hi + 1)) for lo, hi in (t1, t2, t3)]
    if not 0 < pos[0] < pos[1] < pos[2] < T - 1:
        raise ValueError("TempOrd positions must be increasing and interior")
    symbols = rng.choice(_FILLERS, size=T)
    symbols[0] = _E
    symbols[-1] = _B
    bits = rng.integers(0, 2, size=3)
    for p, bit in zip(pos, bits):
        symbols[p] = _Y if bit else _X
    inputs = np.zeros((T, len(TEMPORD_SYMBOLS)))
    inputs[np.arange(T), symbols] = 1.0
    label = int(4 * bits[0] + 2 * bits[1] + bits[2])
    return Sample(inputs, label, T - 1)


def noiseseq_table(n, rng):
    """Symbol indices ``(x, y, a_1 .. a_{n-2})``, a random permutation of n."""
    if n < 3:
        raise ValueError("NoiseSeq needs n >= 3")
    return tuple(int(v) for v in rng.permutation(n))


def gen_noiseseq(n, rng, table=None):
    """One NoiseSeq sample of length n-1; target is the first symbol's index.

    ``table`` is fixed per experiment; when omitted it is drawn from ``rng``
    first, which only makes sense for one-off samples.
    """
    if table is None:
        table = noiseseq_table(n, rng)
    x, y, *fill = table
    first = x if rng.random() < 0.5 else y
    symbols = [first, *fill]
    inputs = np.zeros((n - 1, n))
    inputs[np.arange(n - 1), symbols] = 1.0
    return Sample(inputs, first, n - 2)


@dataclass(frozen=True)
class AddingTask:
    T_min: int = 100
    T_max: int = 110
    windows: tuple = None
    kind = "adding"
    input_width = 2
    output_width = 1
    loss = "mse"

    def bind(self, rng):
        return self

    def generate(self, rng):
        return gen_adding(self.T_min, self.T_max, rng, self.windows)


@dataclass(frozen=True)
class TempOrdTask:
    length: tuple = (100, 110)
    t1: tuple = (10, 20)
    t2: tuple = (33, 43)
    t3: tuple = (66, 76)
    kind = "tempord"
    input_width = 8
    output_width = 8
    loss = "ce"

    def bind(self, rng):
        return self

    def generate(self, rng):
        return gen_tempord(rng, self.length, self.t1, self.t2, self.t3)


@dataclass(frozen=True)
class NoiseSeqTask:
    n: int = 50
    table: tuple = None
    kind = "noiseseq"
    loss = "ce"

    @property
    def input_width(self):
        return self.n

    @property
    def output_width(self):
        return self.n

    def bind(self, rng):
        if self.table is not None:
            return self
        return replace(self, table=noiseseq_table(self.n, rng))

    def generate(self, rng):
        return gen_noiseseq(self.n, rng, self.table)


_DESK = {
    "adding": dict(T_min=20, T_max=30),
    "tempord": dict(length=(20, 25), t1=(2, 4), t2=(8, 10), t3=(14, 16)),
    "noiseseq": dict(n=10),
}
_TASKS = {"adding": AddingTask, "tempord": TempOrdTask, "noiseseq": NoiseSeqTask}


def make_task(kind, scale="full", **overrides):
    """Task by name; ``scale="desk"`` selects the scaled-down variant."""
    if kind not in _TASKS:
        raise ValueError(f"unknown task {kind!r}; expected one of {sorted(_TASKS)}")
    if scale not in ("full", "desk"):
        raise ValueError("scale is 'full' or 'desk'")
    params = dict(_DESK[kind]) if scale == "desk" else {}
    params.update(overrides)
    for key in ("length", "t1", "t2", "t3", "windows"):
        if params.get(key) is not None:
            params[key] = tuple(tuple(v) if isinstance(v, list) else v for v in params[key])
    return _TASKS[kind](**params)


_TABLE, _TRAIN, _VAL, _TEST = range(4)


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


@dataclass
class Split:
    """Train/validation/test data for one run.

    The training stream is regenerated each epoch from its own substream;
    validation and test sets are fixed.
    """

    task: object
    seed: int
    train_size: int
    validation: list = field(repr=False)
    test: list = field(repr=False)

    def train_epoch(self, epoch):
        rng = _stream(self.seed, _TRAIN, int(epoch))
        return [self.task.generate(rng) for _ in range(self.train_size)]


def make_split(task, sizes, seed):
    """Bind ``task`` to ``seed`` and build its ``(train, val, test)`` split.

    ``sizes`` is ``(train_per_epoch, validation, test)``.
    """
    train_size, val_size, test_size = (int(s) for s in sizes)
    if min(train_size, val_size, test_size) < 1:
        raise ValueError("split sizes must be positive")
    task = task.bind(_stream(seed, _TABLE))
    val_rng = _stream(seed, _VAL)
    test_rng = _stream(seed, _TEST)
    validation = [task.generate(val_rng) for _ in range(val_size)]
    test = [task.generate(test_rng) for _ in range(test_size)]
    return Split(task, int(seed), train_size, validation, test)


def batches(samples, batch_size, rng=None):
    """Group samples of equal length into ``(inputs, targets)`` minibatches.

    ``inputs`` has shape ``(batch, T, width)``. Batches never mix lengths,
    so no padding or masking is needed. With ``rng`` the samples and the
    batch order are shuffled.
    """
    order = np.arange(len(samples))
    if rng is not None:
        order = rng.permutation(order)
    buckets = {}
    for i in order:
        buckets.setdefault(samples[i].length, []).append(samples[i])
    out = []
    for length in sorted(buckets):
        group = buckets[length]
        for start in range(0, len(group), batch_size):
            chunk = group[start : start + batch_size]
            xs = np.stack([s.inputs for s in chunk])
            ys = np.asarray([s.target for s in chunk])
            out.append((xs, ys))
    if rng is not None:
        out = [out[i] for i in rng.permutation(len(out))]
    return out


def dump_jsonl(samples, path):
    """One JSON object per line: ``inputs`` (nested lists), ``target``, ``loss_at``."""
    with open(path, "w") as fh:
        for s in samples:
            target = s.target if isinstance(s.target, float) else int(s.target)
            fh.write(json.dumps({"inputs": s.inputs.tolist(), "target": target,
                                 "loss_at": int(s.loss_at)}) + "\n")

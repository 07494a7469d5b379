"""Recurrent cells: the Deep Memory Update block and RNN/LSTM/GRU baselines.

All cells share one interface: ``initial_state(batch)``, ``step(state, x)``
and ``output(state)``. :class:`SequenceModel` puts a cell in front of a
linear readout, which is how every architecture in the comparison is built.

DMU memory update, per memory cell::

    h_t = h_{t-1} * sigmoid(z_t) + tanh(hc_t) * (1 - sigmoid(z_t))

where ``(z_t, hc_t)`` is the linear 2d-wide output of a feedforward network
fed with ``[x_t ; S * h_{t-1}]``. Hidden FNN layers use tanh.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

__all__ = [
    "DmuSpec",
    "CellSpec",
    "DMU",
    "RNN",
    "LSTM",
    "GRU",
    "SequenceModel",
    "dmu_init",
    "count_weights",
    "build_model",
    "save_params",
    "load_params",
    "CELL_KINDS",
]

CELL_KINDS = ("dmu", "rnn", "lstm", "gru")


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class DmuSpec:
    input_width: int
    fnn_hidden: list
    memory_width: int
    z_bias_offset: float = 3.0
    f_activation: str = "tanh"

    def __post_init__(self):
        self.fnn_hidden = [int(w) for w in self.fnn_hidden]
        if not self.fnn_hidden:
            raise ValueError("the FNN needs at least one hidden layer before its linear output")
        if self.input_width < 1 or self.memory_width < 1 or min(self.fnn_hidden) < 1:
            raise ValueError("widths must be positive")
        if self.f_activation != "tanh":
            raise ValueError(f"unsupported f activation {self.f_activation!r}")

    @classmethod
    def from_arch(cls, input_width, arch, **kw):
        """``arch`` in table notation: FNN hidden widths followed by d."""
        arch = [int(a) for a in arch]
        if len(arch) < 2:
            raise ValueError("DMU arch needs hidden widths and a memory width, e.g. (5, 5)")
        return cls(input_width, arch[:-1], arch[-1], **kw)

    @property
    def layer_widths(self):
        d = self.memory_width
        return [self.input_width + d, *self.fnn_hidden, 2 * d]


@dataclass
class CellSpec:
    kind: str
    layer_widths: list
    input_width: int

    def __post_init__(self):
        if self.kind not in ("rnn", "lstm", "gru"):
            raise ValueError(f"unknown baseline cell kind {self.kind!r}")
        self.layer_widths = [int(w) for w in self.layer_widths]
        if not self.layer_widths or min(self.layer_widths) < 1 or self.input_width < 1:
            raise ValueError("widths must be positive")


class DMU:
    """Deep Memory Update block: one FNN plus a layer of d memory cells."""

    kind = "dmu"

    def __init__(self, spec, rng, prefix="dmu"):
        self.spec = spec
        widths = spec.layer_widths
        self.weights = []
        self.biases = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            self.weights.append(ad.Parameter(glorot(rng, fan_in, fan_out), f"{prefix}.W{i}"))
            self.biases.append(ad.Parameter(np.zeros((1, fan_out)), f"{prefix}.b{i}"))
        # z-producing units are the first d outputs of the linear layer
        self.biases[-1].value[0, : spec.memory_width] += spec.z_bias_offset

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def width(self):
        return self.spec.memory_width

    def initial_state(self, batch):
        return ad.constant(np.zeros((batch, self.spec.memory_width)))

    def output(self, state):
        return state

    def preactivations(self, scaled_h, x):
        """FNN pass on ``[x ; S h]``; returns the linear output ``[z | hc]``."""
        a = ad.concat(x, scaled_h)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = ad.affine(a, w, b)
            if i < last:
                a = ad.tanh(a)
        return a

    @staticmethod
    def memory_update(h_prev, z, hc):
        """The memory-cell update built from elementary ops (reference path)."""
        gate = ad.sigmoid(z)
        kept = ad.hadamard(h_prev, gate)
        fresh = ad.hadamard(ad.tanh(hc), ad.one_minus(gate))
        return ad.add(kept, fresh)

    def step(self, h_prev, x, S=1.0, return_scaled=False):
        if x.shape[0] != h_prev.shape[0] or x.shape[1] != self.spec.input_width:
            raise ad.AutodiffError(
                f"dmu step: input {x.shape} / state {h_prev.shape} do not fit the spec")
        scaled = ad.scale(h_prev, S)
        h = ad.gated_memory(h_prev, self.preactivations(scaled, x))
        if return_scaled:
            return h, scaled
        return h

    def unroll(self, xs, S=1.0, h0=None, probe_final=True):
        """Run the block over ``xs``; returns ``(states, handles)``.

        ``handles`` are the scaled memory nodes ``S h_t`` for ``t = 1..T``;
        the initial state belongs to the previous episode boundary and is not
        logged. With ``probe_final`` the last state passes through a probe so
        its scaled node also receives an adjoint and ``len(handles) == T``;
        ``states[-1]`` is then the probe output, equal in value to the last
        state.
        """
        if len(xs) == 0:
            raise ValueError("cannot unroll over an empty sequence")
        h = self.initial_state(xs[0].shape[0]) if h0 is None else h0
        states, handles = [], []
        for t, x in enumerate(xs):
            h, scaled = self.step(h, x, S, return_scaled=True)
            if t > 0:
                handles.append(scaled)
            states.append(h)
        if probe_final:
            scaled, states[-1] = ad.probe(states[-1], S)
            handles.append(scaled)
        return states, handles


def dmu_init(spec, rng):
    return DMU(spec, rng)


class _Stacked:
    """Layers of a gated baseline; each layer feeds its h to the next."""

    gates = 1

    def __init__(self, spec, rng, prefix=None):
        self.spec = spec
        prefix = prefix or spec.kind
        self.weights, self.biases = [], []
        fan = spec.input_width
        for i, h in enumerate(spec.layer_widths):
            blocks = [glorot(rng, fan + h, h) for _ in range(self.gates)]
            self.weights.append(ad.Parameter(np.concatenate(blocks, axis=1), f"{prefix}.W{i}"))
            self.biases.append(ad.Parameter(np.zeros((1, self.gates * h)), f"{prefix}.b{i}"))
            fan = h

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def width(self):
        return self.spec.layer_widths[-1]

    def _zeros(self, batch, h):
        return ad.constant(np.zeros((batch, h)))

    def step(self, state, x, S=1.0):
        if x.shape[1] != self.spec.input_width:
            raise ad.AutodiffError(f"{self.spec.kind} step: input width {x.shape[1]}")
        new = []
        inp = x
        for i, layer_state in enumerate(state):
            layer_state = self.layer_step(i, layer_state, inp)
            new.append(layer_state)
            inp = self._h(layer_state)
        return new

    def output(self, state):
        return self._h(state[-1])

    def unroll(self, xs, S=1.0, h0=None, probe_final=False):
        if len(xs) == 0:
            raise ValueError("cannot unroll over an empty sequence")
        state = self.initial_state(xs[0].shape[0]) if h0 is None else h0
        states = []
        for x in xs:
            state = self.step(state, x)
            states.append(state)
        return states, []


class RNN(_Stacked):
    """Ordinary recurrent layers, ``h_t = tanh(W [x; h] + b)``."""

    kind = "rnn"
    gates = 1

    def initial_state(self, batch):
        return [self._zeros(batch, h) for h in self.spec.layer_widths]

    def _h(self, s):
        return s

    def layer_step(self, i, h, x):
        return ad.tanh(ad.affine(ad.concat(x, h), self.weights[i], self.biases[i]))


class LSTM(_Stacked):
    """Forget-gate LSTM without peepholes; gate blocks ordered i, f, o, g."""

    kind = "lstm"
    gates = 4

    def initial_state(self, batch):
        return [(self._zeros(batch, h), self._zeros(batch, h)) for h in self.spec.layer_widths]

    def _h(self, s):
        return s[0]

    def layer_step(self, i, state, x):
        h, c = state
        n = h.shape[1]
        pre = ad.affine(ad.concat(x, h), self.weights[i], self.biases[i])
        return self.cell_update(c, pre, n)

    @staticmethod
    def cell_update(c, pre, n):
        ig = ad.sigmoid(ad.columns(pre, 0, n))
        fg = ad.sigmoid(ad.columns(pre, n, 2 * n))
        og = ad.sigmoid(ad.columns(pre, 2 * n, 3 * n))
        g = ad.tanh(ad.columns(pre, 3 * n, 4 * n))
        c_new = ad.add(ad.hadamard(fg, c), ad.hadamard(ig, g))
        h_new = ad.hadamard(og, ad.tanh(c_new))
        return h_new, c_new


class GRU(_Stacked):
    """GRU with gate blocks ordered r, u, candidate.

    ``h_t = u * h_{t-1} + (1 - u) * tanh(W_c [x; r * h_{t-1}] + b_c)``,
    so a saturated update gate keeps the state.
    """

    kind = "gru"
    gates = 3

    def initial_state(self, batch):
        return [self._zeros(batch, h) for h in self.spec.layer_widths]

    def _h(self, s):
        return s

    def layer_step(self, i, h, x):
        n = h.shape[1]
        w, b = self.weights[i], self.biases[i]
        xh = ad.concat(x, h)
        # r and u share one affine; the candidate needs r * h first
        gate_w = ad.columns(w, 0, 2 * n)
        gate_b = ad.columns(b, 0, 2 * n)
        gates = ad.sigmoid(ad.affine(xh, gate_w, gate_b))
        r = ad.columns(gates, 0, n)
        u = ad.columns(gates, n, 2 * n)
        cand_w = ad.columns(w, 2 * n, 3 * n)
        cand_b = ad.columns(b, 2 * n, 3 * n)
        cand = ad.tanh(ad.affine(ad.concat(x, ad.hadamard(r, h)), cand_w, cand_b))
        return ad.add(ad.hadamard(u, h), ad.hadamard(ad.one_minus(u), cand))


_BASELINES = {"rnn": RNN, "lstm": LSTM, "gru": GRU}


class SequenceModel:
    """A recurrent block followed by a linear readout on its final output."""

    def __init__(self, block, output_width, rng):
        self.block = block
        self.readout_w = ad.Parameter(glorot(rng, block.width, output_width), "readout.W")
        self.readout_b = ad.Parameter(np.zeros((1, output_width)), "readout.b")

    @property
    def kind(self):
        return self.block.kind

    @property
    def params(self):
        return [*self.block.params, self.readout_w, self.readout_b]

    def n_weights(self):
        return sum(p.value.size for p in self.params)

    def forward(self, xs, S=1.0):
        """Final-step readout for a batch sequence ``xs`` (list of (batch, n)).

        Returns ``(prediction, handles)``; handles are empty for baselines.
        """
        if not isinstance(xs, (list, tuple)):
            xs = [ad.constant(x) for x in np.asarray(xs).transpose(1, 0, 2)]
        states, handles = self.block.unroll(xs, S, probe_final=True)
        h = self.block.output(states[-1])
        return ad.affine(h, self.readout_w, self.readout_b), handles

    def state_dict(self):
        return {p.name: p.value.copy() for p in self.params}

    def load_state_dict(self, state):
        for p in self.params:
            if p.name not in state:
                raise KeyError(f"missing parameter {p.name}")
            value = np.asarray(state[p.name], dtype=np.float64).reshape(p.shape)
            p.value[...] = value


def build_model(kind, arch, input_width, output_width, rng, z_bias_offset=3.0):
    """Build a readout model from table notation, e.g. ``("dmu", (5, 5))``."""
    if kind == "dmu":
        block = DMU(DmuSpec.from_arch(input_width, arch, z_bias_offset=z_bias_offset), rng)
    elif kind in _BASELINES:
        block = _BASELINES[kind](CellSpec(kind, list(arch), input_width), rng)
    else:
        raise ValueError(f"unknown cell kind {kind!r}; expected one of {CELL_KINDS}")
    return SequenceModel(block, output_width, rng)


def count_weights(kind, arch, input_width, output_width):
    """Trainable parameters of cell plus readout, biases included."""
    arch = [int(a) for a in arch]
    if kind == "dmu":
        widths = DmuSpec.from_arch(input_width, arch).layer_widths
        total = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
        last = arch[-1]
    elif kind in _BASELINES:
        gates = _BASELINES[kind].gates
        total, fan = 0, input_width
        for h in arch:
            total += gates * ((fan + h) * h + h)
            fan = h
        last = arch[-1]
    else:
        raise ValueError(f"unknown cell kind {kind!r}")
    return total + last * output_width + output_width


def save_params(model, path):
    """Write named parameters as JSON: name -> {shape, values (row-major)}."""
    payload = {
        "kind": model.kind,
        "params": [
            {"name": p.name, "shape": list(p.shape), "values": p.value.ravel().tolist()}
            for p in model.params
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_params(model, path):
    with open(path) as fh:
        payload = json.load(fh)
    state = {
        entry["name"]: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for entry in payload["params"]
    }
    model.load_state_dict(state)
    return model

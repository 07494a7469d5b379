"""Tape-based reverse-mode differentiation over 2-D float64 arrays.

Every tensor is a ``(rows, cols)`` array; the leading axis is the batch.
Operations executed inside an active :class:`Tape` are recorded in creation
order, which is already a topological order, so the backward pass is a
single reverse sweep. Outside a tape the same functions just compute values,
which is how inference and validation run.

    >>> w = Parameter(np.array([[3.0]]), "w")
    >>> with Tape() as tape:
    ...     y = hadamard(w, w)
    >>> tape.backward(y)
    >>> read_adjoint(w)
    array([[6.]])
"""

from __future__ import annotations

import threading

import numpy as np

__all__ = [
    "AutodiffError",
    "Tensor",
    "Parameter",
    "Tape",
    "constant",
    "matmul",
    "affine",
    "add",
    "sub",
    "hadamard",
    "scale",
    "one_minus",
    "sigmoid",
    "tanh",
    "gated_memory",
    "concat",
    "columns",
    "probe",
    "mse_loss",
    "cross_entropy_loss",
    "backward",
    "read_adjoint",
]


class AutodiffError(RuntimeError):
    """Misuse of the tape: wrong shapes, double backward, early reads."""


_active = threading.local()


def _current_tape():
    try:
        stack = _active.stack
    except AttributeError:
        return None
    return stack[-1] if stack else None


class Tensor:
    """A value in the graph together with its accumulated adjoint."""

    __slots__ = ("value", "_adj", "_parents", "_backward", "tape", "requires_grad")

    def __init__(self, value, requires_grad=False):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        elif value.ndim == 1:
            value = value.reshape(1, -1)
        elif value.ndim != 2:
            raise AutodiffError(f"tensors are 2-D, got shape {value.shape}")
        self.value = value
        self._adj = None
        self._parents = ()
        self._backward = None
        self.tape = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def adjoint(self):
        if self._adj is None:
            return np.zeros_like(self.value)
        return self._adj

    def zero_adjoint(self):
        self._adj = None

    def _accumulate(self, g):
        if self._adj is None:
            self._adj = np.array(g, dtype=np.float64, copy=True)
        else:
            self._adj += g

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


class Parameter(Tensor):
    """A trainable leaf tensor with a name unique inside its model."""

    __slots__ = ("name",)

    def __init__(self, value, name):
        super().__init__(value, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def constant(value):
    return Tensor(value, requires_grad=False)


class Tape:
    """Records operations of one episode; discarded after its backward pass."""

    def __init__(self):
        self.nodes = []
        self.leaves = {}
        self.done = False

    def __enter__(self):
        stack = getattr(_active, "stack", None)
        if stack is None:
            stack = _active.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _active.stack.pop()
        return False

    def _record(self, out, parents, backward_fn):
        out._parents = parents
        out._backward = backward_fn
        out.tape = self
        out.requires_grad = True
        self.nodes.append(out)
        for p in parents:
            if p.tape is None and p.requires_grad:
                self.leaves[id(p)] = p

    def backward(self, loss):
        if loss.tape is not self:
            raise AutodiffError("loss was not recorded on this tape")
        if loss.shape != (1, 1):
            raise AutodiffError(f"backward needs a scalar root, got shape {loss.shape}")
        if self.done:
            raise AutodiffError("backward already ran on this tape; call reset() first")
        self.done = True
        loss._accumulate(np.ones((1, 1)))
        for node in reversed(self.nodes):
            if node._adj is None:
                continue
            node._backward(node._adj)

    def reset(self):
        """Zero every adjoint this tape produced, leaves included."""
        for node in self.nodes:
            node._adj = None
        for leaf in self.leaves.values():
            leaf._adj = None
        self.done = False


def backward(loss):
    if loss.tape is None:
        raise AutodiffError("loss is not attached to a tape")
    loss.tape.backward(loss)


def read_adjoint(node):
    """Return a copy of ``dLoss/dnode`` from the most recent backward pass."""
    if node.tape is not None and not node.tape.done:
        raise AutodiffError("adjoint read before backward")
    return node.adjoint.copy()


def _node(value):
    out = Tensor.__new__(Tensor)
    out.value = value
    out._adj = None
    out._parents = ()
    out._backward = None
    out.tape = None
    out.requires_grad = False
    return out


def _make(value, parents, backward_fn):
    out = _node(value)
    tape = _current_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        tape._record(out, parents, backward_fn)
    return out


def _push(t, g):
    if t.requires_grad:
        t._accumulate(g)


def _check_same(a, b, op):
    if a.shape != b.shape:
        raise AutodiffError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- linear algebra -------------------------------------------------------


def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise AutodiffError(f"matmul: inner dimensions {a.shape} @ {b.shape}")

    def bw(g):
        _push(a, g @ b.value.T)
        _push(b, a.value.T @ g)

    return _make(a.value @ b.value, (a, b), bw)


def affine(x, w, b):
    """``x @ w + b`` with ``b`` a single row shared by every batch row."""
    if x.shape[1] != w.shape[0]:
        raise AutodiffError(f"affine: inner dimensions {x.shape} @ {w.shape}")
    if b.shape != (1, w.shape[1]):
        raise AutodiffError(f"affine: bias shape {b.shape}, expected (1, {w.shape[1]})")

    def bw(g):
        _push(x, g @ w.value.T)
        _push(w, x.value.T @ g)
        _push(b, g.sum(axis=0, keepdims=True))

    return _make(x.value @ w.value + b.value, (x, w, b), bw)


# -- elementwise ----------------------------------------------------------


def add(a, b):
    _check_same(a, b, "add")

    def bw(g):
        _push(a, g)
        _push(b, g)

    return _make(a.value + b.value, (a, b), bw)


def sub(a, b):
    _check_same(a, b, "sub")

    def bw(g):
        _push(a, g)
        _push(b, -g)

    return _make(a.value - b.value, (a, b), bw)


def hadamard(a, b):
    _check_same(a, b, "hadamard")

    def bw(g):
        _push(a, g * b.value)
        _push(b, g * a.value)

    return _make(a.value * b.value, (a, b), bw)


def scale(a, s):
    """Multiply by a constant scalar; ``s`` itself is not differentiated."""
    s = float(s)

    def bw(g):
        _push(a, s * g)

    return _make(s * a.value, (a,), bw)


def one_minus(a):
    def bw(g):
        _push(a, -g)

    return _make(1.0 - a.value, (a,), bw)


def _stable_sigmoid(z):
    # 1/(1+e^-z) for z >= 0, e^z/(1+e^z) for z < 0; exp never overflows
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0, e) / (1.0 + e)


def sigmoid(a):
    y = _stable_sigmoid(a.value)

    def bw(g):
        _push(a, g * y * (1.0 - y))

    return _make(y, (a,), bw)


def tanh(a):
    y = np.tanh(a.value)

    def bw(g):
        _push(a, g * (1.0 - y * y))

    return _make(y, (a,), bw)


def gated_memory(h_prev, pre):
    """Memory-cell update on a ``(batch, 2d)`` preactivation ``[z | hc]``.

    ``h = h_prev * sigmoid(z) + tanh(hc) * (1 - sigmoid(z))`` in one node.
    """
    d = h_prev.shape[1]
    if pre.shape != (h_prev.shape[0], 2 * d):
        raise AutodiffError(f"gated_memory: preactivation {pre.shape} for state {h_prev.shape}")
    gate = _stable_sigmoid(pre.value[:, :d])
    cand = np.tanh(pre.value[:, d:])
    h = h_prev.value * gate + cand * (1.0 - gate)

    def bw(g):
        _push(h_prev, g * gate)
        if pre.requires_grad:
            dpre = np.empty_like(pre.value)
            dpre[:, :d] = g * (h_prev.value - cand) * gate * (1.0 - gate)
            dpre[:, d:] = g * (1.0 - gate) * (1.0 - cand * cand)
            pre._accumulate(dpre)

    return _make(h, (h_prev, pre), bw)


# -- structural -----------------------------------------------------------


def concat(a, b, axis=1):
    other = 1 - axis
    if a.shape[other] != b.shape[other]:
        raise AutodiffError(f"concat: shapes {a.shape} and {b.shape} along axis {axis}")
    cut = a.shape[axis]

    def bw(g):
        if axis == 1:
            _push(a, g[:, :cut])
            _push(b, g[:, cut:])
        else:
            _push(a, g[:cut])
            _push(b, g[cut:])

    return _make(np.concatenate([a.value, b.value], axis=axis), (a, b), bw)


def columns(a, start, stop):
    """Column slice ``a[:, start:stop]``."""
    if not 0 <= start < stop <= a.shape[1]:
        raise AutodiffError(f"columns: bad range [{start}, {stop}) for shape {a.shape}")

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.value)
            full[:, start:stop] = g
            a._accumulate(full)

    return _make(a.value[:, start:stop].copy(), (a,), bw)


def probe(a, s):
    """Expose ``d loss / d(s * a)`` without changing the value flowing on.

    Returns ``(scaled, out)``: ``scaled`` holds ``s * a`` and ``out`` holds
    ``a`` exactly. Downstream consumers use ``out``; the adjoint of ``scaled``
    is then the gradient with respect to the scaled quantity.
    """
    s = float(s)
    scaled = scale(a, s)

    def bw(g):
        _push(scaled, g / s)

    out = _make(a.value.copy(), (scaled,), bw)
    return scaled, out


# -- losses ---------------------------------------------------------------


def mse_loss(pred, target):
    """Mean of squared errors over every entry."""
    target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    diff = pred.value - target
    n = diff.size

    def bw(g):
        _push(pred, g * (2.0 / n) * diff)

    return _make(np.array([[np.mean(diff * diff)]]), (pred,), bw)


def cross_entropy_loss(logits, class_index):
    """Softmax cross-entropy averaged over the batch rows."""
    idx = np.asarray(class_index, dtype=np.int64).reshape(-1)
    rows, k = logits.shape
    if idx.shape[0] != rows:
        raise AutodiffError(f"cross_entropy: {idx.shape[0]} targets for {rows} rows")
    if np.any(idx < 0) or np.any(idx >= k):
        raise AutodiffError(f"cross_entropy: class index outside [0, {k})")
    z = logits.value
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    picked = logp[np.arange(rows), idx]
    value = -picked.mean()

    def bw(g):
        p = np.exp(logp)
        p[np.arange(rows), idx] -= 1.0
        _push(logits, g * p / rows)

    return _make(np.array([[value]]), (logits,), bw)

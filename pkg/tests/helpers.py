"""Independent oracles shared by the test modules."""

import numpy as np

FD_STEP = 1e-5


def numerical_grad(f, arr, step=FD_STEP):
    """Central differences of scalar ``f()`` w.r.t. ``arr``, perturbed in place."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + step
        up = f()
        arr[i] = old - step
        down = f()
        arr[i] = old
        grad[i] = (up - down) / (2 * step)
    return grad


def rel_error(analytic, numeric, floor=1e-6):
    """Elementwise max of |a - n| / max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def dmu_step_scalar(W, b, h_prev, x, S):
    """Memory update evaluated one element at a time with plain floats.

    ``W``/``b`` are the FNN layers (hidden layers tanh, last layer linear).
    """
    import math

    batch, d = h_prev.shape
    out = np.zeros((batch, d))
    for r in range(batch):
        a = [float(v) for v in x[r]] + [S * float(v) for v in h_prev[r]]
        for li, (w, bias) in enumerate(zip(W, b)):
            nxt = []
            for j in range(w.shape[1]):
                acc = 0.0
                for i in range(w.shape[0]):
                    acc += a[i] * w[i, j]
                acc += bias[0, j]
                nxt.append(math.tanh(acc) if li < len(W) - 1 else acc)
            a = nxt
        for i in range(d):
            z, hc = a[i], a[d + i]
            sig = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
            out[r, i] = h_prev[r, i] * sig + math.tanh(hc) * (1.0 - sig)
    return out

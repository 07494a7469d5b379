"""Memory-scaling controller driven by backward-in-time gradient norms.

Each training episode yields the norms ``|g_t|`` of the loss gradient with
respect to the scaled memory ``S h_t``, in time order. The update shrinks S
when gradients grow going backward in time and raises it (up to 1) when
they decay::

    ratio   = sum_t |g_{t-1}|^p / sum_t |g_t|^p
    factor  = ratio ** (-1 / (p * (1 + eps)))
    S_{k+1} = min(S_k (k-1)/k + S_k factor / k, 1)
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import read_adjoint

__all__ = [
    "ScaleController",
    "capture_norms",
    "update_scale",
    "growth_ratio",
    "interpolation_chain_check",
]


@dataclass(frozen=True)
class ScaleController:
    S: float = 1.0
    k: int = 1
    p: float = 1.0
    epsilon: float = 0.2
    norm_floor: float = 1e-12
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.S <= 1.0:
            raise ValueError(f"S must lie in (0, 1], got {self.S}")
        if self.p < 1.0:
            raise ValueError("p must be >= 1")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.k < 1:
            raise ValueError("episode counter starts at 1")


def capture_norms(handles):
    """Frobenius norm of the adjoint at each scaled-memory node, in time order."""
    return [float(np.linalg.norm(read_adjoint(h))) for h in handles]


def growth_ratio(norms, p=1.0, norm_floor=1e-12):
    """``sum |g_{t-1}|^p / sum |g_t|^p`` over consecutive pairs of ``norms``."""
    g = np.maximum(np.asarray(norms, dtype=np.float64), norm_floor)
    if g.size < 2:
        raise ValueError("need at least two gradient norms")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient norms must be finite")
    gp = g**p
    return float(gp[:-1].sum() / gp[1:].sum())


def update_scale(ctrl, norms):
    """Return the controller after one episode with gradient norms ``norms``.

    Short logs (fewer than two norms), logs where every norm is below the
    floor, and disabled controllers leave S as it is; k always advances.
    """
    advanced = replace(ctrl, k=ctrl.k + 1)
    if not ctrl.enabled or len(norms) < 2:
        return advanced
    g = np.asarray(norms, dtype=np.float64)
    if not np.any(g > ctrl.norm_floor):
        return advanced
    ratio = growth_ratio(g, ctrl.p, ctrl.norm_floor)
    factor = ratio ** (-1.0 / (ctrl.p * (1.0 + ctrl.epsilon)))
    k = ctrl.k
    S = ctrl.S * (k - 1) / k + ctrl.S * factor / k
    return replace(advanced, S=min(S, 1.0))


def interpolation_chain_check(norms, p=1.0, epsilon=0.2, k=1, norm_floor=1e-12):
    """Per-episode multiplicative factors of the successive S refinements.

    ``S0`` divides by the plain mean step ratio, ``S1`` uses the power mean
    of order p, ``S2`` weights each ratio by ``|g_t|^p``, ``S3`` damps the
    exponent by ``1 / (1 + epsilon)`` and ``S4`` averages with weight ``1/k``.
    Each value is ``S_{k+1} / S_k`` for that variant (before clipping).
    """
    g = np.maximum(np.asarray(norms, dtype=np.float64), norm_floor)
    if g.size < 2:
        raise ValueError("need at least two gradient norms")
    steps = g[:-1] / g[1:]
    s0 = 1.0 / steps.mean()
    s1 = np.mean(steps**p) ** (-1.0 / p)
    ratio = growth_ratio(g, p, norm_floor)
    s2 = ratio ** (-1.0 / p)
    s3 = ratio ** (-1.0 / (p * (1.0 + epsilon)))
    s4 = (k - 1) / k + s3 / k
    return {"S0": float(s0), "S1": float(s1), "S2": float(s2), "S3": float(s3), "S4": float(s4)}

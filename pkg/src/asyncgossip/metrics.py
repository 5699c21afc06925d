"""Diagnostics computed from network snapshots.

Conventions: the consensus distance is the *sum* sum_i ||x_i - x_bar||^2
(the quantity the convergence algebra manipulates); the per-worker average is
available separately for plotting. All functions here are read-only.
"""

from __future__ import annotations

import math

import numpy as np

_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2 fallback


class MetricsError(ValueError):
    pass


def _stack(states) -> np.ndarray:
    x = np.asarray(states, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise MetricsError(f"expected (n, d) snapshot, got shape {x.shape}")
    return x


def consensus_distance(states) -> float:
    """sum_i ||x_i - x_bar||^2 over the worker snapshot (n, d)."""
    x = _stack(states)
    return float(np.sum((x - x.mean(axis=0)) ** 2))


def consensus_distance_mean(states) -> float:
    """Per-worker average of the consensus distance."""
    x = _stack(states)
    return consensus_distance(x) / x.shape[0]


def lyapunov_phi2(
    states,
    states_tilde,
    x_star: np.ndarray,
    t: float,
    mu: float,
    gamma: float,
    chi1: float,
    lambda_pinv: np.ndarray,
) -> float:
    """Exponentially-weighted potential for the accelerated strongly-convex run.

    e^{-r t} ( ||x_bar - x*||^2 + (1/n) ||pi x||^2
               + (1/(n chi1)) (pi x_tilde)^T Lambda^+ (pi x_tilde) ),
    with r = mu * gamma. The last term is evaluated on the consensus-orthogonal
    component; since Lambda^+ annihilates the all-ones direction this equals
    the raw quadratic form on x_tilde.
    """
    if x_star is None:
        raise MetricsError("lyapunov_phi2 requires the global optimum x_star")
    x = _stack(states)
    xt = _stack(states_tilde)
    n = x.shape[0]
    x_bar = x.mean(axis=0)
    pix = x - x_bar
    pixt = xt - xt.mean(axis=0)
    r = mu * gamma
    quad = float(np.einsum("ik,ij,jk->", pixt, lambda_pinv, pixt))
    return math.exp(-r * t) * (
        float(np.sum((x_bar - np.asarray(x_star, dtype=float)) ** 2))
        + float(np.sum(pix ** 2)) / n
        + quad / (n * chi1)
    )


def time_avg_grad_norm(times, grad_norm_sq) -> float:
    """Trapezoidal (1/T) integral of ||grad f(x_bar_t)||^2 over the trace."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(grad_norm_sq, dtype=float)
    if t.size == 0:
        raise MetricsError("empty trace")
    if t.size == 1:
        return float(v[0])
    span = t[-1] - t[0]
    if span <= 0:
        raise MetricsError("trace times must be increasing")
    return float(_trapezoid(v, t) / span)

"""
Central finite-difference oracle for loss gradients.

    g_i ≈ (f(x + h·e_i) − f(x − h·e_i)) / 2h,  h = 1e-5

rel_error uses max|a − b| / max(max|a|, max|b|, 1e-8) so gradients that are
exactly zero compare cleanly.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_STEP = 1e-5


def numeric_grad(f: Callable[[np.ndarray], float], x, h: float = DEFAULT_STEP) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad


def rel_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)), 1e-8)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def check_grad(loss_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]], x,
               h: float = DEFAULT_STEP) -> float:
    """Relative error between the analytic gradient of loss_and_grad and finite differences."""
    x = np.asarray(x, dtype=np.float64)
    _, analytic = loss_and_grad(x)
    numeric = numeric_grad(lambda z: loss_and_grad(z)[0], x, h)
    return rel_error(analytic, numeric)

"""Central finite differences, the oracle for every reverse-mode gradient."""
from __future__ import annotations

import numpy as np


def finite_difference_gradient(f, params, eps=1e-5):
    """Numerical gradient of scalar ``f`` at ``params``.

    ``params`` is either a single array or a dict of name -> array; ``f`` is
    called with the same structure. Arrays are perturbed in place and
    restored, so ``f`` must not keep references to them between calls.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if isinstance(params, dict):
        return {name: _fd_array(lambda: f(params), arr, eps) for name, arr in params.items()}
    arr = np.asarray(params, dtype=np.float64)
    if np.ndim(arr) == 0:
        arr = arr.reshape(1)
        return _fd_array(lambda: f(arr[0]), arr, eps)[0]
    return _fd_array(lambda: f(arr), arr, eps)


def _fd_array(evaluate, arr, eps):
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = float(evaluate())
        flat[i] = orig - eps
        minus = float(evaluate())
        flat[i] = orig
        gflat[i] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic, numeric, floor=1e-7):
    """||a - n|| / max(||a||, ||n||, floor); the floor keeps all-zero
    gradients from turning rounding noise into a large ratio."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / denom)

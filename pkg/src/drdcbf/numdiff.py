"""Central-difference helpers used for gradients the analytic path does not cover."""

from __future__ import annotations

from typing import Callable

import numpy as np


def fd_grad(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def fd_jac(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector function, shape (len(f), len(x))."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    J = np.zeros((f0.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        fp = np.atleast_1d(np.asarray(f(x + e), dtype=float))
        fm = np.atleast_1d(np.asarray(f(x - e), dtype=float))
        J[:, i] = (fp - fm) / (2.0 * step)
    return J


def fd_dir(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, v: np.ndarray,
           step: float = 1e-6) -> np.ndarray:
    """Directional derivative of f along v by central differences."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    fp = np.atleast_1d(np.asarray(f(x + step * v), dtype=float))
    fm = np.atleast_1d(np.asarray(f(x - step * v), dtype=float))
    return (fp - fm) / (2.0 * step)

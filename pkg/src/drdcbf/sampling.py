"""Deterministic sample streams: Halton low-discrepancy points plus seeded uniforms."""

from __future__ import annotations

import numpy as np

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def _radical_inverse(idx: np.ndarray, base: int) -> np.ndarray:
    out = np.zeros(idx.shape, dtype=float)
    f = 1.0 / base
    i = idx.astype(np.int64).copy()
    while np.any(i > 0):
        out += f * (i % base)
        i //= base
        f /= base
    return out


def halton(n: int, dim: int, skip: int = 20) -> np.ndarray:
    """First n Halton points in [0, 1)^dim (leading points skipped), shape (n, dim)."""
    if dim > len(_PRIMES):
        raise ValueError(f"halton supports up to {len(_PRIMES)} dimensions, got {dim}")
    idx = np.arange(skip, skip + n)
    return np.column_stack([_radical_inverse(idx, _PRIMES[d]) for d in range(dim)])


def box_samples(box: np.ndarray, n: int, seed: int | None = None) -> np.ndarray:
    """Points in an axis-aligned box: a Halton block plus a seeded uniform block.

    box has shape (dim, 2) with rows (lo, hi). Half the budget goes to each
    stream so reports are reproducible from (seed, box, n) alone.
    """
    box = np.asarray(box, dtype=float)
    lo, hi = box[:, 0], box[:, 1]
    n_h = n // 2
    n_u = n - n_h
    pts_h = halton(n_h, box.shape[0]) if n_h else np.empty((0, box.shape[0]))
    rng = np.random.default_rng(0 if seed is None else seed)
    pts_u = rng.uniform(size=(n_u, box.shape[0]))
    pts = np.vstack([pts_h, pts_u])
    return lo + pts * (hi - lo)

"""Discrete differential operators on pixel grids.

An image field is a 2-D ``float64`` array of shape ``(N1, N2)`` in row-major
pixel order.  A gradient pair is stored as a ``(2, N1, N2)`` array whose first
plane holds horizontal differences (next column minus current) and whose
second plane holds vertical differences (next row minus current), with
Neumann (replicate) boundary so the last column / last row of differences is
zero.  This keeps the squared operator norm of the gradient below 8.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def gradient(f: np.ndarray) -> np.ndarray:
    """Forward-difference gradient of a 2-D field, shape ``(2, N1, N2)``."""
    f = np.asarray(f, dtype=np.float64)
    g = np.zeros((2,) + f.shape)
    g[0, :, :-1] = f[:, 1:] - f[:, :-1]
    g[1, :-1, :] = f[1:, :] - f[:-1, :]
    return g


def divergence(g: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`gradient`.

    Satisfies ``<gradient(f), g> == <f, -divergence(g)>`` exactly (up to
    rounding), which is the convention expected by the dual solver steps.
    """
    g = np.asarray(g, dtype=np.float64)
    d1, d2 = g[0], g[1]
    n1, n2 = d1.shape
    out = np.zeros((n1, n2))
    if n2 > 1:
        out[:, 0] += d1[:, 0]
        out[:, 1:-1] += d1[:, 1:-1] - d1[:, :-2]
        out[:, -1] -= d1[:, -2]
    if n1 > 1:
        out[0, :] += d2[0, :]
        out[1:-1, :] += d2[1:-1, :] - d2[:-2, :]
        out[-1, :] -= d2[-2, :]
    return out


def tv(f: np.ndarray) -> float:
    """Isotropic total variation: sum of per-pixel gradient magnitudes."""
    g = gradient(f)
    return float(np.sqrt(g[0] ** 2 + g[1] ** 2).sum())


def operator_norm(
    op: Callable[[np.ndarray], np.ndarray],
    op_adjoint: Callable[[np.ndarray], np.ndarray],
    shape: tuple,
    iters: int = 50,
    seed: int = 0,
) -> float:
    """Estimate the spectral norm of a linear operator by power iteration.

    Iterates on ``op_adjoint(op(v))`` from a seeded Gaussian start vector;
    the start must not lie in the null space, hence the random draw.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v) + 1e-300
    est = 0.0
    for _ in range(iters):
        w = op_adjoint(op(v))
        n = np.linalg.norm(w)
        if n == 0.0:
            return 0.0
        est = np.sqrt(n)
        v = w / n
    # one last Rayleigh refinement: ||op v|| for the converged unit vector
    est = np.linalg.norm(op(v))
    return float(est)

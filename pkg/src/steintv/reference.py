"""Brute-force dense-matrix references for small grids.

Everything here exists to cross-check the matrix-free fast paths and is
guarded to small shapes.  Vectorization conventions match the package:
an attribute pair flattens to ``[h.ravel(), v.ravel()]`` and a stack to the
concatenation of its planes, row-major.

``reference_solve`` is a deliberately plain, unaccelerated primal-dual loop
with inline difference/projection/2x2 arithmetic and its own fixed steps; it
shares no code with the production solver.
"""

from __future__ import annotations

import numpy as np

from .covariance import CovarianceModel
from .forward import ScaleRange

MAX_PIXELS = 1024


def _check_small(shape: tuple) -> None:
    if shape[0] * shape[1] > MAX_PIXELS:
        raise ValueError(f"dense reference limited to {MAX_PIXELS} pixels")


def gradient_matrix(shape: tuple) -> np.ndarray:
    """Dense ``(2n, n)`` forward-difference matrix (horizontal rows first)."""
    _check_small(shape)
    n1, n2 = shape
    n = n1 * n2
    mat = np.zeros((2 * n, n))
    for i in range(n1):
        for j in range(n2):
            p = i * n2 + j
            if j + 1 < n2:
                mat[p, i * n2 + j + 1] += 1.0
                mat[p, p] -= 1.0
            if i + 1 < n1:
                mat[n + p, (i + 1) * n2 + j] += 1.0
                mat[n + p, p] -= 1.0
    return mat


def phi_matrix(scales: ScaleRange, shape: tuple) -> np.ndarray:
    """Dense ``(P, N)`` degradation matrix."""
    _check_small(shape)
    n = shape[0] * shape[1]
    eye = np.eye(n)
    blocks = [np.hstack([j * eye, eye]) for j in scales.scales]
    return np.vstack(blocks)


def pi_matrix(shape: tuple) -> np.ndarray:
    _check_small(shape)
    n = shape[0] * shape[1]
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = np.eye(n)
    return out


def a_matrix(scales: ScaleRange, shape: tuple) -> np.ndarray:
    """Dense composite operator built from its definition."""
    phi = phi_matrix(scales, shape)
    gram_inv = np.linalg.inv(phi.T @ phi)
    return pi_matrix(shape) @ gram_inv @ phi.T


def covariance_matrix(model: CovarianceModel, shape: tuple) -> np.ndarray:
    """Dense ``(P, P)`` covariance with periodic lag lookup."""
    _check_small(shape)
    n1, n2 = shape
    n = n1 * n2
    J = model.J
    out = np.zeros((J * n, J * n))
    for a in range(J):
        for b in range(J):
            kern = model.kernel(a, b)
            if kern is None:
                out[a * n : (a + 1) * n, b * n : (b + 1) * n] = model.C[a, b] * np.eye(n)
                continue
            radius = kern.shape[0] // 2
            folded = np.zeros(shape)
            for u in range(-radius, radius + 1):
                for v in range(-radius, radius + 1):
                    folded[u % n1, v % n2] += kern[radius + u, radius + v]
            block = np.empty((n, n))
            for i1 in range(n1):
                for j1 in range(n2):
                    for i2 in range(n1):
                        for j2 in range(n2):
                            block[i1 * n2 + j1, i2 * n2 + j2] = folded[
                                (i1 - i2) % n1, (j1 - j2) % n2
                            ]
            out[a * n : (a + 1) * n, b * n : (b + 1) * n] = model.C[a, b] * block
    return out


def dense_trace_term(model: CovarianceModel, shape: tuple) -> float:
    """``Tr(A S A*)`` assembled from explicit matrices."""
    amat = a_matrix(model.scales, shape)
    smat = covariance_matrix(model, shape)
    return float(np.trace(amat @ smat @ amat.T))


def reference_solve(
    y: np.ndarray,
    lam,
    scales: ScaleRange,
    max_iter: int = 1_000_000,
    settle_tol: float = 1e-14,
) -> np.ndarray:
    """Slow unaccelerated primal-dual oracle (theta = 1, fixed steps).

    Runs until the iterates settle below ``settle_tol`` in max-norm change
    (checked in blocks) or ``max_iter`` sweeps.
    """
    lam = np.asarray(lam, dtype=np.float64)
    jv = scales.scales[:, None, None]
    F0, F1, F2 = scales.F0, scales.F1, scales.F2

    def dgrad(f):
        gx = np.zeros_like(f)
        gy = np.zeros_like(f)
        gx[:, :-1] = f[:, 1:] - f[:, :-1]
        gy[:-1, :] = f[1:, :] - f[:-1, :]
        return gx, gy

    def dgrad_adj(gx, gy):
        out = np.zeros_like(gx)
        out[:, :-1] -= gx[:, :-1]
        out[:, 1:] += gx[:, :-1]
        out[:-1, :] -= gy[:-1, :]
        out[1:, :] += gy[:-1, :]
        return out

    # least-squares warm start via the normal equations
    det = F0 * F2 - F1 * F1
    sj = (jv * y).sum(axis=0)
    s1 = y.sum(axis=0)
    h = (F0 * sj - F1 * s1) / det
    v = (-F1 * sj + F2 * s1) / det

    step = 0.95 / (max(lam[0], lam[1]) * np.sqrt(8.0) + 1e-300)
    tau1 = tau2 = step
    zx = np.zeros((2,) + h.shape)  # dual, horizontal component per channel
    zy = np.zeros((2,) + h.shape)
    prev = np.stack([h, v])
    for k in range(1, max_iter + 1):
        # dual ascent on the extrapolated primal (extrapolation uses theta=1)
        wh = 2.0 * h - prev[0]
        wv = 2.0 * v - prev[1]
        prev = np.stack([h, v])
        for c, (field, weight) in enumerate(((wh, lam[0]), (wv, lam[1]))):
            gx, gy = dgrad(field)
            zx[c] += tau1 * weight * gx
            zy[c] += tau1 * weight * gy
            norm = np.sqrt(zx[c] ** 2 + zy[c] ** 2)
            scale = np.maximum(norm, 1.0)
            zx[c] /= scale
            zy[c] /= scale
        # primal descent + exact data prox
        th = h - tau2 * lam[0] * dgrad_adj(zx[0], zy[0])
        tv_ = v - tau2 * lam[1] * dgrad_adj(zx[1], zy[1])
        rh = th + 2.0 * tau2 * sj
        rv = tv_ + 2.0 * tau2 * s1
        a = 1.0 + 2.0 * tau2 * F2
        b = 2.0 * tau2 * F1
        dd = 1.0 + 2.0 * tau2 * F0
        den = a * dd - b * b
        h = (dd * rh - b * rv) / den
        v = (-b * rh + a * rv) / den
        if k % 10_000 == 0:
            change = max(np.abs(h - prev[0]).max(), np.abs(v - prev[1]).max())
            if change < settle_tol:
                break
    return np.stack([h, v])

"""Proximal operators of the primal-dual scheme and their input differentials.

Group structure: the mixed norm couples 2-vectors along a designated axis
(default: axis 0), one group per remaining index.  The dual variable of the
solver is shaped ``(channel, direction, N1, N2)`` and passes ``axis=1`` so
that each pixel's (horizontal, vertical) gradient components of one channel
form a group.

On the nonsmooth boundary ``||x|| == tau`` the differentials take the zero
branch (weak derivative choice on a measure-zero set).
"""

from __future__ import annotations

import numpy as np

from .forward import ScaleRange, apply_phi_adjoint

# floor for norm denominators; large enough that its square does not
# underflow to zero in the differential formulas
_TINY = 1e-150


def _group_norm(x: np.ndarray, axis: int) -> np.ndarray:
    return np.sqrt((x * x).sum(axis=axis, keepdims=True))


def prox_l21(x: np.ndarray, tau: float, axis: int = 0) -> np.ndarray:
    """Group soft-thresholding: shrink each 2-vector by ``tau`` in norm."""
    n = _group_norm(x, axis)
    scale = np.maximum(1.0 - tau / np.maximum(n, _TINY), 0.0)
    return scale * x


def dprox_l21(x: np.ndarray, tau: float, delta: np.ndarray, axis: int = 0) -> np.ndarray:
    """Differential of :func:`prox_l21` at ``x`` applied to ``delta``."""
    n = _group_norm(x, axis)
    active = n > tau
    n_safe = np.maximum(n, _TINY)
    inner = (delta * x).sum(axis=axis, keepdims=True)
    radial = delta - (inner / n_safe**2) * x
    return np.where(active, delta - (tau / n_safe) * radial, 0.0)


def project_l2_ball(z: np.ndarray, tau: float = 1.0, axis: int = 0) -> np.ndarray:
    """Prox of the conjugate of the group norm: radial projection of each
    group onto the closed unit ball.  ``tau`` is immaterial (the conjugate is
    an indicator), kept in the signature for uniform prox call sites."""
    n = _group_norm(z, axis)
    return z / np.maximum(n, 1.0)


def dproject_l2_ball(z: np.ndarray, tau: float, delta: np.ndarray, axis: int = 0) -> np.ndarray:
    """Differential of :func:`project_l2_ball` at ``z`` applied to ``delta``.

    Identity strictly inside the ball; on and outside the boundary the
    tangential part scaled back by the group norm.
    """
    n = _group_norm(z, axis)
    inside = n < 1.0
    n_safe = np.maximum(n, _TINY)
    inner = (delta * z).sum(axis=axis, keepdims=True)
    tangential = (delta - (inner / n_safe**2) * z) / n_safe
    return np.where(inside, delta, tangential)


def prox_data_fidelity(
    x_tilde: np.ndarray, tau: float, phi_adj_y: np.ndarray, s: ScaleRange
) -> np.ndarray:
    """Prox of ``tau * ||y - phi(.)||^2`` at ``x_tilde``.

    Solves ``(I + 2*tau*phi*phi) x = x_tilde + 2*tau*phi^* y`` through the
    per-pixel 2x2 cofactor inverse; ``phi_adj_y`` carries the precomputed
    adjoint of the observations.
    """
    rhs = x_tilde + 2.0 * tau * phi_adj_y
    return _solve_shifted_gram(rhs, tau, s)


def dprox_data_fidelity(delta: np.ndarray, tau: float, s: ScaleRange) -> np.ndarray:
    """Differential of :func:`prox_data_fidelity` in its first argument.

    The prox is affine in ``x_tilde``, so the differential is the same 2x2
    solve without the observation term.
    """
    return _solve_shifted_gram(delta, tau, s)


def _solve_shifted_gram(rhs: np.ndarray, tau: float, s: ScaleRange) -> np.ndarray:
    a = 1.0 + 2.0 * tau * s.F2
    b = 2.0 * tau * s.F1
    d = 1.0 + 2.0 * tau * s.F0
    det = a * d - b * b  # always > 1: the Gram block is positive semidefinite
    out = np.empty_like(rhs)
    out[0] = (d * rhs[0] - b * rhs[1]) / det
    out[1] = (-b * rhs[0] + a * rhs[1]) / det
    return out


def prox_data_fidelity_from_y(
    x_tilde: np.ndarray, tau: float, y: np.ndarray, s: ScaleRange
) -> np.ndarray:
    """Convenience wrapper taking the raw observation stack."""
    return prox_data_fidelity(x_tilde, tau, apply_phi_adjoint(y, s), s)

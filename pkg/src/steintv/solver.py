"""Accelerated primal-dual solver for the TV-penalized scale regression.

Solves, for an observation stack ``y`` and positive weights ``(lam_h, lam_v)``,

    min_x ||y - phi(x)||^2 + lam_h*TV(h) + lam_v*TV(v),      x = (h, v),

by a Chambolle-Pock scheme accelerated through the strong convexity of the
data term, together with a fused forward-differentiation pass that propagates
the Jacobian of the iterates with respect to the two weights through every
linear and proximal step.

The regularization weights live inside the linear analysis operator (they
scale the per-channel gradients), so the dual prox reduces to a plain
projection onto unit balls and the weight-derivative terms enter only the
linear half-steps.

The dual variable is shaped ``(2, 2, N1, N2)``: axis 0 is the channel (h, v),
axis 1 the gradient direction.  The Jacobian state carries one such block per
weight, leading axis of length 2.

Stopping uses the normalized duality gap ``(primal - dual) / (primal + 1)``,
where the dual value is evaluated in closed form by minimizing the Lagrangian
over the primal variable through the per-pixel Gram inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grids
from .errors import SolverDivergenceError
from .forward import (
    H,
    V,
    ScaleRange,
    apply_phi,
    apply_phi_adjoint,
    invert_gram,
    linear_regression,
    strong_convexity_modulus,
)
from .prox import (
    dproject_l2_ball,
    dprox_data_fidelity,
    project_l2_ball,
    prox_data_fidelity,
)


@dataclass
class SolverConfig:
    gap_tol: float = 1e-4
    max_iter: int = 500_000
    gap_every: int = 10
    accelerate: bool = True
    step_margin: float = 0.99
    power_iters: int = 50
    power_seed: int = 0


def apply_u(x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Weighted per-channel gradient, shape ``(2, 2, N1, N2)``."""
    return np.stack([lam[H] * grids.gradient(x[H]), lam[V] * grids.gradient(x[V])])


def apply_u_adjoint(z: np.ndarray, lam: np.ndarray) -> np.ndarray:
    return np.stack(
        [-lam[H] * grids.divergence(z[H]), -lam[V] * grids.divergence(z[V])]
    )


def apply_du(x: np.ndarray, which: int) -> np.ndarray:
    """Derivative of the analysis operator in weight ``which`` applied to x."""
    out = np.zeros((2, 2) + x.shape[1:])
    out[which] = grids.gradient(x[which])
    return out


def apply_du_adjoint(z: np.ndarray, which: int) -> np.ndarray:
    out = np.zeros((2,) + z.shape[2:])
    out[which] = -grids.divergence(z[which])
    return out


class TvSolver:
    """Primal-dual solver bound to one octave range and one configuration.

    ``calls`` counts solver invocations (plain and differentiated alike),
    which is the unit the tuner reports.
    """

    def __init__(self, scales: ScaleRange, config: SolverConfig | None = None):
        self.scales = scales
        self.config = config or SolverConfig()
        self.calls = 0
        self.last_iterations = 0
        self.last_gap = np.inf

    # -- objective / gap -------------------------------------------------

    def objective(self, x: np.ndarray, y: np.ndarray, lam: np.ndarray) -> float:
        resid = apply_phi(x, self.scales) - y
        fit = float((resid * resid).sum())
        return fit + float(lam[H]) * grids.tv(x[H]) + float(lam[V]) * grids.tv(x[V])

    def dual_value(self, z: np.ndarray, y: np.ndarray, lam: np.ndarray) -> float:
        """Closed-form dual objective for a dual point in the unit balls."""
        uz = apply_u_adjoint(z, lam)
        xz = invert_gram(apply_phi_adjoint(y, self.scales) - 0.5 * uz, self.scales)
        resid = apply_phi(xz, self.scales) - y
        return float((resid * resid).sum() + (xz * uz).sum())

    def duality_gap(self, x: np.ndarray, z: np.ndarray, y: np.ndarray, lam: np.ndarray) -> float:
        """Normalized gap ``(primal - dual) / (primal + 1)``; zero at the saddle."""
        p = self.objective(x, y, lam)
        d = self.dual_value(project_l2_ball(z, axis=1), y, lam)
        return (p - d) / (p + 1.0)

    def operator_norm(self, lam: np.ndarray, shape: tuple) -> float:
        return grids.operator_norm(
            lambda v: apply_u(v, lam),
            lambda w: apply_u_adjoint(w, lam),
            (2,) + shape,
            iters=self.config.power_iters,
            seed=self.config.power_seed,
        )

    # -- solvers ----------------------------------------------------------

    def solve(self, y: np.ndarray, lam, x0: np.ndarray | None = None) -> np.ndarray:
        x, _ = self._run(y, np.asarray(lam, dtype=np.float64), x0, with_jacobian=False)
        return x

    def solve_with_jacobian(self, y: np.ndarray, lam, x0: np.ndarray | None = None):
        return self._run(y, np.asarray(lam, dtype=np.float64), x0, with_jacobian=True)

    def _run(self, y, lam, x0, with_jacobian):
        cfg = self.config
        s = self.scales
        self.calls += 1
        shape = y.shape[1:]

        norm_u = self.operator_norm(lam, shape)
        tau1 = tau2 = cfg.step_margin / max(norm_u, 1e-300)
        gamma = strong_convexity_modulus(s)

        phi_adj_y = apply_phi_adjoint(y, s)
        x = linear_regression(y, s) if x0 is None else np.array(x0, dtype=np.float64)
        w = x.copy()
        z = np.zeros((2, 2) + shape)
        if with_jacobian:
            dx = np.zeros((2, 2) + shape)
            dw = np.zeros((2, 2) + shape)
            dz = np.zeros((2, 2, 2) + shape)

        gap = self.duality_gap(x, z, y, lam)
        iterations = 0
        for k in range(1, cfg.max_iter + 1):
            z_tilde = z + tau1 * apply_u(w, lam)
            z_new = project_l2_ball(z_tilde, axis=1)
            x_tilde = x - tau2 * apply_u_adjoint(z_new, lam)
            x_new = prox_data_fidelity(x_tilde, tau2, phi_adj_y, s)

            if with_jacobian:
                dz_new = np.empty_like(dz)
                dx_new = np.empty_like(dx)
                for l in (H, V):
                    dz_t = dz[l] + tau1 * (apply_u(dw[l], lam) + apply_du(w, l))
                    dz_new[l] = dproject_l2_ball(z_tilde, tau1, dz_t, axis=1)
                    dx_t = dx[l] - tau2 * (
                        apply_u_adjoint(dz_new[l], lam) + apply_du_adjoint(z_new, l)
                    )
                    dx_new[l] = dprox_data_fidelity(dx_t, tau2, s)

            if cfg.accelerate:
                theta = 1.0 / np.sqrt(1.0 + 2.0 * gamma * tau2)
                tau1, tau2 = tau1 / theta, tau2 * theta
            else:
                theta = 1.0
            w = x_new + theta * (x_new - x)
            if with_jacobian:
                dw = dx_new + theta * (dx_new - dx)
                dx, dz = dx_new, dz_new
            x, z = x_new, z_new

            iterations = k
            if k % cfg.gap_every == 0 or k == cfg.max_iter:
                if not np.isfinite(x).all():
                    raise SolverDivergenceError(k)
                gap = self.duality_gap(x, z, y, lam)
                if gap <= cfg.gap_tol:
                    break

        self.last_iterations = iterations
        self.last_gap = gap
        if with_jacobian:
            return x, dx
        return x, None

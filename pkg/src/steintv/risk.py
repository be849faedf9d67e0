"""Finite-difference Monte-Carlo risk estimate and its hyperparameter gradient.

Both routines run the estimator twice, at the observations and at the
observations shifted by ``nu`` times a frozen Gaussian probe, and assemble

    value = ||A(phi(x) - y)||^2
            + (2/nu) <A* Pi (x_pert - x), S eps>
            - Tr(A S A*)

where the last term has a closed form depending only on the inter-octave
covariance.  The gradient version repeats the assembly on the weight-Jacobian
columns produced by the differentiated solver.

The estimator argument is anything exposing ``solve(y, lam)`` and, for the
gradient, ``solve_with_jacobian(y, lam)``; tests inject constant and
closed-form linear estimators through the same seam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceModel, apply_S, trace_term
from .forward import ScaleRange, apply_A, apply_A_adjoint, apply_phi, apply_projection


@dataclass
class SureReport:
    lam: tuple
    value: float
    term_fidelity: float
    term_dof: float
    term_trace: float
    nu: float
    seed: int | None = None

    CSV_HEADER = "lambda_h,lambda_v,sure,term_fidelity,term_dof,term_trace,nu,seed"

    def csv_row(self) -> str:
        seed = "" if self.seed is None else str(self.seed)
        return (
            f"{self.lam[0]!r},{self.lam[1]!r},{self.value!r},{self.term_fidelity!r},"
            f"{self.term_dof!r},{self.term_trace!r},{self.nu!r},{seed}"
        )


@dataclass
class SugarReport:
    gradient: np.ndarray
    nu: float
    seed: int | None = None


def fd_step(model: CovarianceModel, p_total: int, alpha: float = 0.3) -> float:
    """Finite-difference step heuristic: ``2/P^alpha`` times the largest
    per-octave noise standard deviation."""
    variances = np.maximum(np.diag(model.C), 1e-12)
    return float(2.0 / p_total**alpha * np.sqrt(variances.max()))


def _fidelity(x: np.ndarray, y: np.ndarray, s: ScaleRange) -> tuple:
    residual_image = apply_A(apply_phi(x, s) - y, s)
    return float((residual_image**2).sum()), residual_image


def _dof_probe_image(dx: np.ndarray, s: ScaleRange) -> np.ndarray:
    return apply_A_adjoint(apply_projection(dx), s)


def sure(
    y: np.ndarray,
    lam,
    model: CovarianceModel,
    nu: float,
    eps: np.ndarray,
    estimator,
    seed: int | None = None,
) -> SureReport:
    """Risk estimate at one weight pair; the report stores the three terms."""
    s = model.scales
    lam = np.asarray(lam, dtype=np.float64)
    x_hat = estimator.solve(y, lam)
    x_pert = estimator.solve(y + nu * eps, lam)
    s_eps = apply_S(model, eps)

    term_fid, _ = _fidelity(x_hat, y, s)
    term_dof = 2.0 / nu * float(
        (_dof_probe_image(x_pert - x_hat, s) * s_eps).sum()
    )
    term_trace = trace_term(model, 2 * y.shape[1] * y.shape[2])
    return SureReport(
        lam=(float(lam[0]), float(lam[1])),
        value=term_fid + term_dof - term_trace,
        term_fidelity=term_fid,
        term_dof=term_dof,
        term_trace=term_trace,
        nu=nu,
        seed=seed,
    )


def sugar(
    y: np.ndarray,
    lam,
    model: CovarianceModel,
    nu: float,
    eps: np.ndarray,
    estimator,
    seed: int | None = None,
) -> tuple:
    """Risk estimate and its gradient with respect to the two weights.

    Uses the same probe and step as :func:`sure`; the two differentiated
    solver calls provide both the estimates and their weight-Jacobians.
    """
    s = model.scales
    lam = np.asarray(lam, dtype=np.float64)
    x_hat, jac = estimator.solve_with_jacobian(y, lam)
    x_pert, jac_pert = estimator.solve_with_jacobian(y + nu * eps, lam)
    s_eps = apply_S(model, eps)

    term_fid, residual_image = _fidelity(x_hat, y, s)
    term_dof = 2.0 / nu * float(
        (_dof_probe_image(x_pert - x_hat, s) * s_eps).sum()
    )
    term_trace = trace_term(model, 2 * y.shape[1] * y.shape[2])

    gradient = np.empty(2)
    for l in range(2):
        fid_part = 2.0 * float(
            (apply_A(apply_phi(jac[l], s), s) * residual_image).sum()
        )
        dof_part = 2.0 / nu * float(
            (_dof_probe_image(jac_pert[l] - jac[l], s) * s_eps).sum()
        )
        gradient[l] = fid_part + dof_part

    report = SureReport(
        lam=(float(lam[0]), float(lam[1])),
        value=term_fid + term_dof - term_trace,
        term_fidelity=term_fid,
        term_dof=term_dof,
        term_trace=term_trace,
        nu=nu,
        seed=seed,
    )
    return report, SugarReport(gradient=gradient, nu=nu, seed=seed)

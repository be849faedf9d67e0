"""Quasi-Newton tuning of the two regularization weights.

A plain BFGS loop over the estimated-risk surface, protected by a strict
positivity floor on the weights (step capping, not projection of the inverse
Hessian), a Wolfe line search with a hard evaluation budget, and model-based
initialization of both the starting weights (balancing the data term against
the total variation of the plain regression maps) and the starting inverse
Hessian (sized so the first step moves each weight by a fraction ``kappa``).

The descent engine is generic over the objective: it only needs a callable
returning ``(value, gradient, report)`` so tests can drive it with analytic
functions; :func:`tune` binds it to the risk estimate of the TV solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grids
from .covariance import CovarianceModel, draw_probe
from .errors import DegenerateDataError
from .forward import linear_regression
from .risk import SureReport, fd_step, sugar

SKIP_UPDATE_TOL = 1e-12


@dataclass
class TunerConfig:
    kappa: float = 0.5
    grad_tol: float = 1e-6
    max_iter: int = 250
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_line_evals: int = 20
    lam_floor: float = 1e-8
    max_stalls: int = 2


@dataclass
class TraceRow:
    iteration: int
    lam: tuple
    value: float
    term_fidelity: float
    term_dof: float
    term_trace: float
    grad_norm: float
    alpha: float
    pd_calls: int

    CSV_HEADER = (
        "iteration,lambda_h,lambda_v,sure,term_fidelity,term_dof,term_trace,"
        "grad_norm,alpha,pd_calls"
    )

    def csv_row(self) -> str:
        return (
            f"{self.iteration},{self.lam[0]!r},{self.lam[1]!r},{self.value!r},"
            f"{self.term_fidelity!r},{self.term_dof!r},{self.term_trace!r},"
            f"{self.grad_norm!r},{self.alpha!r},{self.pd_calls}"
        )


@dataclass
class TunerResult:
    lam: np.ndarray
    value: float
    gradient: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = False
    n_evals: int = 0
    skipped_updates: int = 0
    line_search_warnings: int = 0


def init_hyperparams(leaders: np.ndarray, model: CovarianceModel) -> np.ndarray:
    """Starting weights balancing the data term against the TV of the
    plain regression maps: ``tr(S) / (2 TV(.))`` per channel."""
    s = model.scales
    n_pix = leaders.shape[1] * leaders.shape[2]
    trace_S = n_pix * float(np.diag(model.C).sum())
    x_lr = linear_regression(leaders, s)
    tv_h, tv_v = grids.tv(x_lr[0]), grids.tv(x_lr[1])
    if tv_h <= 0.0 or tv_v <= 0.0:
        raise DegenerateDataError("constant regression map: zero total variation")
    return np.array([trace_S / (2.0 * tv_h), trace_S / (2.0 * tv_v)])


def init_inverse_hessian(lam: np.ndarray, grad: np.ndarray, kappa: float = 0.5) -> np.ndarray:
    """Diagonal start ``diag(|kappa*lam_i / g_i|)`` so the first step changes
    each weight by ``kappa*lam_i`` in magnitude; a vanishing gradient entry
    falls back to ``kappa*lam_i / (||g|| + 1e-12)``."""
    g_norm = float(np.linalg.norm(grad))
    diag = np.empty(2)
    for i in range(2):
        if grad[i] != 0.0:
            diag[i] = abs(kappa * lam[i] / grad[i])
        else:
            diag[i] = kappa * abs(lam[i]) / (g_norm + 1e-12)
    return np.diag(diag)


def bfgs_update(Hm: np.ndarray, d: np.ndarray, u: np.ndarray, alpha: float) -> np.ndarray:
    """Rank-two secant update of the inverse Hessian approximation.

    Skips (returns ``Hm`` unchanged) when the curvature product ``u.d`` is too
    small relative to the vector magnitudes, which keeps the approximation
    finite after capped or failed line searches.
    """
    ud = float(u @ d)
    if abs(ud) <= SKIP_UPDATE_TOL * np.linalg.norm(u) * np.linalg.norm(d):
        return Hm
    eye = np.eye(len(d))
    left = eye - np.outer(d, u) / ud
    right = eye - np.outer(u, d) / ud
    return left @ Hm @ right + alpha * np.outer(d, d) / ud


def _box_cap(lam: np.ndarray, d: np.ndarray, floor: float) -> float:
    """Largest step keeping every weight at or above the floor."""
    cap = np.inf
    for i in range(len(lam)):
        if d[i] < 0.0:
            cap = min(cap, (lam[i] - floor) / (-d[i]))
    return cap


def line_search(
    f_g,
    lam: np.ndarray,
    d: np.ndarray,
    f0: float,
    g0: np.ndarray,
    cfg: TunerConfig,
):
    """Strong-Wolfe line search along ``d`` with bracketing and bisection zoom.

    Returns ``(alpha, evaluation, warned)``; ``evaluation`` is the
    ``(value, gradient, report)`` triple at the accepted point.  When the
    evaluation budget runs out, the best strictly positive trial seen so far
    is returned with ``warned`` set.
    """
    slope0 = float(g0 @ d)
    cap = _box_cap(lam, d, cfg.lam_floor)
    if not np.isfinite(cap):
        cap = np.inf
    if cap <= 0.0:
        return 0.0, None, True

    evals = 0
    best = (np.inf, None, None)  # value, alpha, evaluation

    def evaluate(a):
        nonlocal evals, best
        result = f_g(lam + a * d)
        evals += 1
        if result[0] < best[0]:
            best = (result[0], a, result)
        return result

    def wolfe_ok(a, f, slope):
        return (
            f <= f0 + cfg.wolfe_c1 * a * slope0
            and abs(slope) <= cfg.wolfe_c2 * abs(slope0)
        )

    def zoom(a_lo, f_lo, a_hi):
        nonlocal evals
        while evals < cfg.max_line_evals:
            a = 0.5 * (a_lo + a_hi)
            res = evaluate(a)
            f, g = res[0], res[1]
            slope = float(g @ d)
            if f > f0 + cfg.wolfe_c1 * a * slope0 or f >= f_lo:
                a_hi = a
            else:
                if abs(slope) <= cfg.wolfe_c2 * abs(slope0):
                    return a, res, False
                if slope * (a_hi - a_lo) >= 0.0:
                    a_hi = a_lo
                a_lo, f_lo = a, f
        return _best_or_warn(best)

    alpha_prev, f_prev = 0.0, f0
    alpha = min(1.0, cap)
    first = True
    while evals < cfg.max_line_evals:
        res = evaluate(alpha)
        f, g = res[0], res[1]
        slope = float(g @ d)
        if f > f0 + cfg.wolfe_c1 * alpha * slope0 or (not first and f >= f_prev):
            return zoom(alpha_prev, f_prev, alpha)
        if wolfe_ok(alpha, f, slope):
            return alpha, res, False
        if slope >= 0.0:
            return zoom(alpha, f, alpha_prev)
        if alpha >= cap * (1.0 - 1e-12):
            # box-capped step: Armijo holds, curvature unreachable
            return alpha, res, False
        alpha_prev, f_prev = alpha, f
        alpha = min(2.0 * alpha, cap)
        first = False
    return _best_or_warn(best)


def _best_or_warn(best):
    value, alpha, evaluation = best
    if evaluation is None:
        return 0.0, None, True
    return alpha, evaluation, True


def minimize_bfgs(
    f_g,
    lam0: np.ndarray,
    cfg: TunerConfig | None = None,
    h0: np.ndarray | None = None,
    calls_fn=None,
) -> TunerResult:
    """BFGS descent with positivity floor; the engine behind :func:`tune`.

    ``f_g(lam)`` returns ``(value, gradient, report)`` where ``report`` may be
    ``None`` (analytic objectives) or a :class:`~steintv.risk.SureReport`.
    """
    cfg = cfg or TunerConfig()
    calls_fn = calls_fn or (lambda: 0)
    lam = np.maximum(np.asarray(lam0, dtype=np.float64), cfg.lam_floor)
    result = TunerResult(lam=lam, value=np.inf, gradient=np.zeros_like(lam))

    def counted(point):
        result.n_evals += 1
        return f_g(point)

    f, g, report = counted(lam)
    Hm = h0 if h0 is not None else init_inverse_hessian(lam, g, cfg.kappa)
    _record(result, 0, lam, f, report, g, 0.0, calls_fn())

    stalls = 0
    for t in range(1, cfg.max_iter + 1):
        if np.linalg.norm(g) <= cfg.grad_tol:
            result.converged = True
            break
        d = -Hm @ g
        if float(g @ d) >= 0.0:
            # inverse Hessian lost positive definiteness: rebuild the
            # diagonal start at the current point
            Hm = init_inverse_hessian(lam, g, cfg.kappa)
            d = -Hm @ g
        alpha, evaluation, warned = line_search(counted, lam, d, f, g, cfg)
        if warned:
            result.line_search_warnings += 1
        if evaluation is None or evaluation[0] >= f:
            stalls += 1
            if stalls >= cfg.max_stalls:
                break
            continue
        stalls = 0
        f_new, g_new, report = evaluation
        u = g_new - g
        Hm_new = bfgs_update(Hm, d, u, alpha)
        if Hm_new is Hm:
            result.skipped_updates += 1
        Hm = 0.5 * (Hm_new + Hm_new.T)
        lam = np.maximum(lam + alpha * d, cfg.lam_floor)
        f, g = f_new, g_new
        _record(result, t, lam, f, report, g, alpha, calls_fn())

    result.lam = lam
    result.value = f
    result.gradient = g
    return result


def _record(result, iteration, lam, value, report, grad, alpha, pd_calls):
    if isinstance(report, SureReport):
        terms = (report.term_fidelity, report.term_dof, report.term_trace)
    else:
        terms = (np.nan, np.nan, np.nan)
    result.trace.append(
        TraceRow(
            iteration=iteration,
            lam=(float(lam[0]), float(lam[1])),
            value=float(value),
            term_fidelity=terms[0],
            term_dof=terms[1],
            term_trace=terms[2],
            grad_norm=float(np.linalg.norm(grad)),
            alpha=float(alpha),
            pd_calls=pd_calls,
        )
    )


def tune(
    y: np.ndarray,
    model: CovarianceModel,
    seed: int,
    estimator,
    cfg: TunerConfig | None = None,
):
    """Full automatic weight selection on one observation stack.

    Freezes one probe and one finite-difference step for the whole run, walks
    the BFGS loop on the estimated risk, and returns the selected weights, the
    final estimate solved at those weights, and the tuner result with its
    per-iteration trace.
    """
    cfg = cfg or TunerConfig()
    p_total = y.size
    nu = fd_step(model, p_total)
    eps = draw_probe(model.scales, y.shape[1:], seed)
    lam0 = init_hyperparams(y, model)

    def f_g(lam):
        report, grad_report = sugar(y, lam, model, nu, eps, estimator, seed=seed)
        return report.value, grad_report.gradient, report

    calls0 = getattr(estimator, "calls", 0)
    result = minimize_bfgs(
        f_g,
        lam0,
        cfg=cfg,
        calls_fn=lambda: getattr(estimator, "calls", 0) - calls0,
    )
    x_hat = estimator.solve(y, result.lam)
    return result.lam, x_hat, result

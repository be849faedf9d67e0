"""Scikit-learn style front ends for the attribute estimation pipeline.

Both estimators consume a single textured image and expose their results as
fitted attributes, in the spirit of clustering/embedding estimators; they
inherit ``get_params`` / ``set_params`` so the pipeline composes with
model-selection tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .covariance import estimate_covariance, restrict
from .forward import ScaleRange
from .solver import SolverConfig, TvSolver
from .texture import log_leaders, threshold_segment, uwt2d
from .tuner import TunerConfig, tune
from .validation import check_hyperparams, check_image


class TvAttributeEstimator(BaseEstimator):
    """Joint regularity / log-variance maps at fixed regularization weights.

    Parameters mirror the solver configuration; ``fit`` runs the multiscale
    analysis and the TV-penalized regression on one image.
    """

    def __init__(
        self,
        lam_h: float = 1.0,
        lam_v: float = 1.0,
        j1: int = 1,
        j2: int = 3,
        gap_tol: float = 1e-4,
        max_iter: int = 500_000,
        accelerate: bool = True,
    ):
        self.lam_h = lam_h
        self.lam_v = lam_v
        self.j1 = j1
        self.j2 = j2
        self.gap_tol = gap_tol
        self.max_iter = max_iter
        self.accelerate = accelerate

    def fit(self, X, y=None):
        image = check_image(X)
        lam = check_hyperparams([self.lam_h, self.lam_v])
        scales = ScaleRange(self.j1, self.j2)
        leaders = log_leaders(uwt2d(image, self.j2), scales)
        solver = TvSolver(
            scales,
            SolverConfig(
                gap_tol=self.gap_tol,
                max_iter=self.max_iter,
                accelerate=self.accelerate,
            ),
        )
        x_hat = solver.solve(leaders, lam)
        self.scales_ = scales
        self.leaders_ = leaders
        self.hurst_map_ = x_hat[0]
        self.log_variance_map_ = x_hat[1]
        self.n_iterations_ = solver.last_iterations
        self.duality_gap_ = solver.last_gap
        return self

    def transform(self, X=None):
        """Fitted attribute maps stacked as ``(2, N1, N2)``."""
        self._check_fitted()
        return np.stack([self.hurst_map_, self.log_variance_map_])

    def fit_transform(self, X, y=None):
        return self.fit(X).transform()

    def _check_fitted(self):
        if not hasattr(self, "hurst_map_"):
            raise RuntimeError("estimator is not fitted")


class AutoTunedTextureSegmenter(BaseEstimator):
    """End-to-end segmentation with automatic weight selection.

    ``fit`` runs: multiscale log-leaders, single-sample covariance estimation
    (optionally restricted to a partial kind), risk-driven quasi-Newton weight
    tuning, a final solve at the selected weights and scalar clustering of the
    regularity map.
    """

    def __init__(
        self,
        n_classes: int = 2,
        j1: int = 1,
        j2: int = 3,
        covariance_kind: str = "full",
        radius_factor: float = 4.0,
        kappa: float = 0.5,
        max_tuner_iter: int = 250,
        grad_tol: float = 1e-6,
        gap_tol: float = 1e-4,
        max_iter: int = 500_000,
        accelerate: bool = True,
        seed: int = 0,
    ):
        self.n_classes = n_classes
        self.j1 = j1
        self.j2 = j2
        self.covariance_kind = covariance_kind
        self.radius_factor = radius_factor
        self.kappa = kappa
        self.max_tuner_iter = max_tuner_iter
        self.grad_tol = grad_tol
        self.gap_tol = gap_tol
        self.max_iter = max_iter
        self.accelerate = accelerate
        self.seed = seed

    def fit(self, X, y=None):
        image = check_image(X)
        scales = ScaleRange(self.j1, self.j2)
        leaders = log_leaders(uwt2d(image, self.j2), scales)
        model = estimate_covariance(leaders, scales, self.radius_factor)
        if self.covariance_kind != "full":
            model = restrict(model, self.covariance_kind)
        solver = TvSolver(
            scales,
            SolverConfig(
                gap_tol=self.gap_tol,
                max_iter=self.max_iter,
                accelerate=self.accelerate,
            ),
        )
        lam, x_hat, result = tune(
            leaders,
            model,
            self.seed,
            solver,
            TunerConfig(
                kappa=self.kappa,
                grad_tol=self.grad_tol,
                max_iter=self.max_tuner_iter,
            ),
        )
        segmentation = threshold_segment(x_hat[0], self.n_classes, seed=self.seed)
        self.scales_ = scales
        self.leaders_ = leaders
        self.covariance_ = model
        self.hyperparams_ = lam
        self.hurst_map_ = x_hat[0]
        self.log_variance_map_ = x_hat[1]
        self.labels_ = segmentation.labels
        self.class_values_ = segmentation.class_values
        self.risk_estimate_ = result.value
        self.tuner_result_ = result
        self.n_pd_calls_ = solver.calls
        return self

    def predict(self, X=None):
        """Label map of the fitted image."""
        if not hasattr(self, "labels_"):
            raise RuntimeError("estimator is not fitted")
        return self.labels_

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()

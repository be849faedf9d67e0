"""Automatic regularization tuning for TV-based fractal texture segmentation.

The package estimates piecewise-constant local regularity and log-variance
maps from wavelet log-leaders by TV-penalized least squares, selects the two
regularization weights by minimizing an unbiased estimate of the quadratic
risk under correlated Gaussian noise, and thresholds the regularity map into
a segmentation.
"""

from .covariance import (
    CovarianceModel,
    apply_S,
    average_covariance,
    draw_probe,
    estimate_covariance,
    load_covariance,
    restrict,
    save_covariance,
    trace_term,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateDataError,
    DegenerateScaleRangeError,
    SolverDivergenceError,
    SteinTVError,
    TunerError,
    ZeroVarianceError,
)
from .estimators import AutoTunedTextureSegmenter, TvAttributeEstimator
from .forward import (
    ScaleRange,
    apply_A,
    apply_A_adjoint,
    apply_phi,
    apply_phi_adjoint,
    apply_projection,
    invert_gram,
    linear_regression,
    strong_convexity_modulus,
)
from .grids import divergence, gradient, tv
from .risk import SugarReport, SureReport, fd_step, sugar, sure
from .solver import SolverConfig, TvSolver
from .texture import (
    SegmentationResult,
    TextureSpec,
    elliptical_mask,
    leaders,
    log_leaders,
    metrics,
    synthesize,
    threshold_segment,
    uwt2d,
)
from .tuner import (
    TunerConfig,
    TunerResult,
    bfgs_update,
    init_hyperparams,
    init_inverse_hessian,
    line_search,
    minimize_bfgs,
    tune,
)

__version__ = "0.1.0"

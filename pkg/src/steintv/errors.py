"""Exception hierarchy for the steintv package."""


class SteinTVError(Exception):
    """Base class for all package errors."""


class ConfigError(SteinTVError):
    """Invalid run configuration or config file."""


class DataError(SteinTVError):
    """Degenerate or malformed input data."""


class DegenerateScaleRangeError(DataError):
    """Scale range with a single octave: the per-pixel Gram block is singular."""


class ZeroVarianceError(DataError):
    """Covariance estimation hit a constant (zero-variance) plane."""


class DegenerateDataError(DataError):
    """Data too degenerate to initialize the tuner (e.g. constant regression maps)."""


class SolverDivergenceError(SteinTVError):
    """Non-finite value produced by the primal-dual iterations."""

    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"non-finite iterate at iteration {iteration}")


class TunerError(SteinTVError):
    """Failure inside the quasi-Newton tuning loop."""

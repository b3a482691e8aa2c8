"""Maximum smoothed likelihood estimation for current status data with a continuous mark."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CSCMError,
    EmptyCellError,
    SupportError,
    UndefinedNodeError,
    ZeroDenominatorError,
)
from .histogram import Grid, Histogram, build_histogram, default_grid, default_k, make_grid  # noqa: E402
from .model import ModelSpec, Observation, Sample, read_sample_csv, true_cdf, write_sample_csv  # noqa: E402
from .msle import FitResult, MassMatrix, em_step, fit_msle, msle_cdf, psi_gradient, psi_objective  # noqa: E402
from .plugin import grid_cdf_eval, kernel_plugin_cdf, plugin_grid_cdf  # noqa: E402
from .sampler import draw_sample  # noqa: E402

__all__ = [
    "CSCMError", "EmptyCellError", "SupportError", "UndefinedNodeError", "ZeroDenominatorError",
    "Grid", "Histogram", "build_histogram", "default_grid", "default_k", "make_grid",
    "ModelSpec", "Observation", "Sample", "read_sample_csv", "true_cdf", "write_sample_csv",
    "FitResult", "MassMatrix", "em_step", "fit_msle", "msle_cdf", "psi_gradient", "psi_objective",
    "grid_cdf_eval", "kernel_plugin_cdf", "plugin_grid_cdf", "draw_sample",
]

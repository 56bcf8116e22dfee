"""Random-walk Metropolis with Poisson-equation control variates."""
__version__ = "0.1.0"

from . import _backend
from .estimator import CVSpec, EstimateResult, cv_average, plain_average, variance_reduction
from .exceptions import RWMCVError
from .poisson import LimitConstants, gaussian_cv, h_of_l, solve_closed_form, solve_grid
from .sampler import RWMConfig, optimal_l, rwm_run
from .targets import (GaussianMixture1D, MvGaussianMixture, ProductTarget, ScalarDensity,
                      bimodal_mixture, expectation, standard_normal)

__all__ = [
    "CVSpec", "EstimateResult", "GaussianMixture1D", "LimitConstants", "MvGaussianMixture",
    "ProductTarget", "RWMCVError", "RWMConfig", "ScalarDensity", "bimodal_mixture",
    "cv_average", "expectation", "gaussian_cv", "h_of_l", "optimal_l", "plain_average",
    "rwm_run", "solve_closed_form", "solve_grid", "standard_normal", "variance_reduction",
]


def backend():
    """Name of the active kernel backend (``cython`` or ``python``)."""
    return _backend.NAME

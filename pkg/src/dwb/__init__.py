"""Wasserstein-barycentric state-space modeling of multivariate time series.

A K-state model in which each pure state emits from a multivariate Gaussian
and the system's position among states is a simplex-valued weight vector
evolving by a Beta-mixture random walk; transitional data is explained by
the Wasserstein barycenter (displacement interpolation) of the pure states
rather than by a linear mixture.
"""

from ._backend import backend_name
from .discrete import DiscreteCoupling, ot_discrete
from .estimator import DwbParams, FitConfig, FitReport, LineSearchConfig, fit, initialize
from .gaussians import (
    GaussianParams,
    SimplexWeights,
    barycenter,
    barycenter_cov,
    barycenter_mean,
    bures_sq,
    w2_gaussian,
)
from .model import (
    EmpiricalSequence,
    Interpolation,
    ObjectiveConfig,
    PureStates,
    ThetaPriorConfig,
    WindowConfig,
    emission,
    fit_distance,
    objective,
    window_series,
)
from .simplexwalk import (
    BetaMixtureHyper,
    InnovationSequence,
    log_prior_innovations,
    log_prior_innovations_single,
    simulate,
    state_update,
    unroll,
)
from .synth import SynthSpec, generate_toy, place_on_geodesic, random_spd

__version__ = "0.1.0"

__all__ = [
    "BetaMixtureHyper",
    "DiscreteCoupling",
    "DwbParams",
    "EmpiricalSequence",
    "FitConfig",
    "FitReport",
    "GaussianParams",
    "InnovationSequence",
    "Interpolation",
    "LineSearchConfig",
    "ObjectiveConfig",
    "PureStates",
    "SimplexWeights",
    "SynthSpec",
    "ThetaPriorConfig",
    "WindowConfig",
    "backend_name",
    "barycenter",
    "barycenter_cov",
    "barycenter_mean",
    "bures_sq",
    "emission",
    "fit",
    "fit_distance",
    "generate_toy",
    "initialize",
    "log_prior_innovations",
    "log_prior_innovations_single",
    "objective",
    "ot_discrete",
    "place_on_geodesic",
    "random_spd",
    "simulate",
    "state_update",
    "unroll",
    "w2_gaussian",
    "window_series",
    "__version__",
]

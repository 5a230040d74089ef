"""Least favorable additive noise: objectives, search, and theorem checks."""

from .condexp import (
    ObjectiveReport,
    PosteriorMean,
    QuadratureConfig,
    objective,
    objective_atomic,
    objective_density,
    posterior_mean_atomic,
    posterior_mean_density,
    smooth_with_gaussian,
)
from .dist import (
    AtomicDistribution,
    DensityNoise,
    NoiseBudget,
    SignalSpec,
    center,
    distribution_from_json,
    distribution_to_json,
    feasibility_check,
    mixture_moments,
    moments,
    point_mass,
    signal_from_distribution,
    sum_law,
)
from .mc import McEstimate, estimate_objective, refine_bins
from .solve import (
    LCurvePoint,
    OptimizerConfig,
    SolveResult,
    best_noise_search,
    optimize_gaussian_mixture,
    optimize_support_and_weights,
    optimize_weights,
    propose_support,
    trace_L_curve,
    weight_gradient,
)
from .verify import TheoremReport, WeakSequenceSpec, run_all, standard_battery

__version__ = "0.1.0"

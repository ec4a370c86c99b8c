"""Monte Carlo harness, estimators and experiments."""

from .estimators import (
    EstimateWithCI,
    ExactSum,
    ExponentFit,
    FitRefused,
    fit_power_law,
    hanson_wright_bound,
    hanson_wright_envelope,
    mean_estimate,
    tail_probability,
    weighted_line_fit,
)
from .experiments import (
    CHECKS,
    ExperimentResult,
    GradientCheck,
    ci_monotone,
    count_experiment,
    delocalization_stats,
    gap_tail,
    hanson_wright_trial,
    identity_suite,
    overlap_concentration,
    perturbation_gradient_check,
    repulsion_fit,
    semicircle_concentration,
    wegner_moments,
    xi_lower_tail,
)
from .harness import (
    ExperimentAborted,
    ExperimentConfig,
    Record,
    Reducer,
    Tally,
    available_workers,
    make_reducer,
    reducer_names,
    run_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Tail diagnostics and mean-convergence experiments for random fields
indexed by d-dimensional boxes, with Hilbert-space-valued cells."""

__version__ = "0.1.0"

from .convergence import (
    BoundParams,
    ConvergenceSeries,
    ExperimentConfig,
    SeriesPoint,
    bound_domination_check,
    bound_eq23,
    bound_eq27,
    moricz_ratio,
    run_l1_experiment,
    run_lp_experiment,
    trend_test,
)
from .cui import (
    CuiReport,
    EquivalenceReport,
    EventArray,
    TailEstimate,
    adversarial_event_array,
    build_cui_report,
    cesaro_tail_sup,
    check_criterion_i,
    check_event_criterion,
    cui_certificate,
    derive_delta,
    markov_event_array,
    truncation_split,
    verify_criterion_equivalence,
)
from .distributions import DistributionSpec, get_family, sample_array, sample_batch
from .errors import HorizonTooSmallError, NoClosedFormError, PhiDomainError
from .hilbert import HVector, add, inner, norm, scale, zero
from .lattice import (
    LatticeSample,
    MultiIndex,
    box_iter,
    cesaro_average,
    dyadic_boxes,
    dyadic_square_schedule,
    leq,
    max_partial_norm,
    prefix_sums,
    prefix_sums_bruteforce,
)
from .poussin import (
    PhiFunction,
    PoussinConstruction,
    build_phi_from_cui,
    phi_eval,
    phi_eval_many,
    poussin_forward_check,
    poussin_moment_check,
    thresholds_from_cui,
    u_from_thresholds,
    verify_phi_properties,
)

__all__ = [
    "__version__",
    "BoundParams",
    "ConvergenceSeries",
    "CuiReport",
    "DistributionSpec",
    "EquivalenceReport",
    "EventArray",
    "ExperimentConfig",
    "HVector",
    "HorizonTooSmallError",
    "LatticeSample",
    "MultiIndex",
    "NoClosedFormError",
    "PhiDomainError",
    "PhiFunction",
    "PoussinConstruction",
    "SeriesPoint",
    "TailEstimate",
    "add",
    "adversarial_event_array",
    "bound_domination_check",
    "bound_eq23",
    "bound_eq27",
    "box_iter",
    "build_cui_report",
    "build_phi_from_cui",
    "cesaro_average",
    "cesaro_tail_sup",
    "check_criterion_i",
    "check_event_criterion",
    "cui_certificate",
    "derive_delta",
    "dyadic_boxes",
    "dyadic_square_schedule",
    "get_family",
    "inner",
    "leq",
    "markov_event_array",
    "max_partial_norm",
    "moricz_ratio",
    "norm",
    "phi_eval",
    "phi_eval_many",
    "poussin_forward_check",
    "poussin_moment_check",
    "prefix_sums",
    "prefix_sums_bruteforce",
    "run_l1_experiment",
    "run_lp_experiment",
    "sample_array",
    "sample_batch",
    "scale",
    "thresholds_from_cui",
    "trend_test",
    "truncation_split",
    "u_from_thresholds",
    "verify_criterion_equivalence",
    "verify_phi_properties",
    "zero",
]

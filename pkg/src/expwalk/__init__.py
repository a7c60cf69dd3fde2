"""Simulation and estimation toolkit for exponential functionals of random walks."""

from __future__ import annotations

__version__ = "0.1.0"

from .asymptote import (
    RatePrediction,
    SlowlyVarying,
    positivity_probs,
    predicted_log_rate,
    rate_B_n,
    rate_prediction,
    slowly_varying_l1,
    slowly_varying_l1_hat,
    spitzer_rho,
    stable_density,
    stable_density_at_zero,
)
from .conditioned import (
    conditioned_by_rejection,
    simulate_I_up,
    simulate_up_path,
    step_down,
    step_up,
)
from .estimators import (
    ZGrid,
    c5_term_closed_form,
    estimate_bigjump_numerator,
    estimate_C1,
    estimate_C3,
    estimate_C4,
    estimate_C5,
    estimate_drift_constant,
    estimate_EF_ladder,
    estimate_EF_plain,
    estimate_EF_tilted,
    estimate_expected_tau,
    estimate_tau_tail,
)
from .renewal import (
    Flavor,
    MuMeasure,
    Provenance,
    RenewalTable,
    laplace_weighted_integral,
    renewal_estimate,
    renewal_exact_skipfree,
)
from .results import Estimate
from .steps import (
    ExpTilted,
    Gaussian,
    Lattice,
    Reflected,
    ShiftedPareto,
    TwoPoint,
    laplace,
    sample_step,
    step_mean,
    tail_prob,
)
from .tilt import Boundary, FSpec, RegimeTag, TiltReport, esscher, find_lambda, regime_classify
from .walk import (
    PathSample,
    enumerate_paths,
    exact_lattice_dp,
    simulate_path,
    simulate_tau_minus,
)

__all__ = [
    "__version__",
    "Boundary", "Estimate", "ExpTilted", "FSpec", "Flavor", "Gaussian", "Lattice", "MuMeasure",
    "PathSample", "Provenance", "RatePrediction", "Reflected", "RegimeTag", "RenewalTable",
    "ShiftedPareto", "SlowlyVarying", "TiltReport", "TwoPoint", "ZGrid",
    "c5_term_closed_form", "conditioned_by_rejection", "enumerate_paths", "esscher",
    "estimate_C1", "estimate_C3", "estimate_C4", "estimate_C5", "estimate_EF_ladder",
    "estimate_EF_plain", "estimate_EF_tilted", "estimate_bigjump_numerator",
    "estimate_drift_constant", "estimate_expected_tau", "estimate_tau_tail", "exact_lattice_dp",
    "find_lambda", "laplace", "laplace_weighted_integral", "positivity_probs",
    "predicted_log_rate", "rate_B_n", "rate_prediction", "regime_classify", "renewal_estimate",
    "renewal_exact_skipfree", "sample_step", "simulate_I_up", "simulate_path",
    "simulate_tau_minus", "simulate_up_path", "slowly_varying_l1", "slowly_varying_l1_hat",
    "spitzer_rho", "stable_density", "stable_density_at_zero", "step_down", "step_mean",
    "step_up", "tail_prob",
]

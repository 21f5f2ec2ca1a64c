"""Euler-Maruyama for Lévy-driven SDEs with Hölder drift: samplers, coupled
strong-error estimation and empirical convergence rates."""

__version__ = "0.1.0"

from ._accel import backend
from .analysis import (
    ErrorEstimate,
    ErrorFunctional,
    RateReport,
    as_rate_experiment,
    baseline_lipschitz_rate,
    check_admissible,
    error_functional,
    estimate_lp_error,
    fit_rate,
    theoretical_rate,
)
from .levy import (
    IncrementLattice,
    LevySpec,
    char_exponent,
    coarsen,
    sample_increment,
    sample_lattice,
    sample_stable_1d,
    sample_tempered_stable_1d,
    sample_truncated_stable_1d,
    validate_char_exponent,
    verify_h3_moments,
)
from .sde import DriftSpec, SolutionPath, euler_maruyama, reference_solution, shift_reduce

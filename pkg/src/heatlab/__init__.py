"""Simulation lab for the Dirichlet stochastic heat equation on [0, 1]."""

__version__ = "0.1.0"

from .errors import CapacityError, ConvergenceError, DomainError
from .grid import GridSpec, ScalarField
from .green import (
    ExponentFit,
    fit_exponent,
    gaussian_bound_margin,
    gaussian_envelope,
    green,
    green_image,
    green_spectral,
    lemma_b1_fits,
    lemma_b1_integral,
)
from .noise import (
    NoiseSpec,
    PoissonPointSet,
    SeedPolicy,
    ZLaw,
    brownian_sheet,
    donsker_field,
    dominance_count,
    integrate_zeta,
    kac_stroock_field,
    parity_count,
    parity_covariance_exact,
    sample_noise,
    sample_poisson_plane,
    white_noise_field,
)
from .mild import (
    DriftSpec,
    InitialData,
    convolve_full,
    convolve_mild,
    initial_term,
    mild_weights,
    psi_functional,
    sample_white_at,
    sample_white_solution,
    solve_quasilinear,
    white_solution_covariance,
    white_solution_variance,
)
from .lab import (
    ConvergenceReport,
    GreenSection,
    IndicatorRectangle,
    RectangleSpec,
    SmoothSine,
    ZeroFunction,
    donsker_moment_check,
    fdd_convergence,
    hypothesis2_check,
    hypothesis3_check,
    increment_scaling,
    ks_statistic,
    linear_functional,
    manthey_conditions_report,
    manthey_integral,
)

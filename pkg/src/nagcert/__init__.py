"""Nesterov-1983, FISTA and gradient descent with Lyapunov-based linear-rate certification."""

from .errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    InsufficientDataError,
    InvalidInputError,
    InvalidParameterError,
    InvalidProblemError,
    MomentumSingularityError,
    NagcertError,
    NoConvergenceError,
    SearchOverflowError,
    SingularTimeError,
)
from .problems import (
    CompositeProblem,
    SmoothProblem,
    StepSize,
    as_composite,
    make_lasso_deblur,
    make_logsumexp_ridge,
    make_quadratic,
    minimizer_oracle,
    prox_g,
    proximal_step,
    proximal_subgradient,
)
from .optimizers import OptimizerState, Trace, TraceRecord, fista_step, gd_step, nesterov_phase_step, nesterov_step, run
from .lyapunov import (
    EnergyBreakdown,
    RateBound,
    certify,
    check_contraction,
    check_fundamental_proximal,
    check_strong_smooth_inequality,
    check_subgradient_lower_bound,
    composite_rate_bound,
    discrete_lyapunov,
    find_threshold,
    smooth_rate_bound,
)
from .spectral import ModeSpectrum, asymptotic_rate, matrix_power_oracle, mode_spectrum
from .ode import ContinuousState, ContinuousTrace, continuous_lyapunov, integrate, ode_rate_check, ode_rhs
from .analysis import RateFit, compare_rates, fit_linear_rate

__version__ = "0.1.0"

"""Finite-blocklength error probability and blocklength allocation for a
link powered by wireless energy transfer under Nakagami-m fading."""

from .evaluators import (
    LinearizedQParams,
    block_error,
    eps_closed_form,
    eps_fixed_power,
    eps_monte_carlo,
    eps_outage_asymptotic,
    eps_quadrature,
    evaluate,
    linearization_params,
    omega,
)
from .model import (
    BlockAllocation,
    ErrorProbEstimate,
    SystemParams,
    allocation_metrics,
    awgn_normal_terms,
    energy_budget,
    mu_factor,
    product_pdf,
)
from .optimizer import (
    OptimizationResult,
    best_fixed_power,
    min_delay,
    min_error_given_delay,
    min_wet_blocklength,
)
from .specfun import (
    SeriesControl,
    bessel_k,
    gauss_q,
    hyp1f2,
    sample_std_gamma,
    zpk0_antiderivative,
)

__version__ = "0.1.0"

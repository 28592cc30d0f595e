"""Average error probability of the WET/WIT link.

Six routes to the same quantity, the expectation over the fading of the
normal-approximation block error ``Q((C(gamma) - r) / sqrt(V(gamma)/n))``:

* ``eps_monte_carlo``        sample mean over gamma variates
* ``eps_quadrature``         adaptive quadrature, exact Q or its linearization
* ``eps_closed_form``        Bessel/1F2 closed form of the linearized integral
* ``eps_outage_asymptotic``  infinite-blocklength outage probability
* ``eps_fixed_power``        baseline where the source transmits at a fixed power

The linearization replaces Q by a ramp that is 1 below ``zeta2``, 0 above
``xi2`` and linear in the SNR in between.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .model import (
    ErrorProbEstimate,
    LOG2E,
    awgn_normal_terms,
    mu_factor,
)
from .specfun import (
    DEFAULT_SERIES,
    PrecisionLossError,
    SeriesConvergenceError,
    _zpk0_terms,
    bessel_k,
    gauss_q,
    make_stream,
    reliable_digits,
    sample_std_gamma,
    zpk0_antiderivative,
)

SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_HALF_PI = math.sqrt(0.5 * math.pi)

DEFAULT_QUAD_TOL = 1e-9
DEFAULT_MC_SAMPLES = 1_000_000
MC_CHUNK = 1 << 18
# closed form is rejected below this many reliable significant digits
MIN_RELIABLE_DIGITS = 6.0


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, value, error):
        super().__init__(message)
        self.value = value
        self.error = error


@dataclass(frozen=True)
class LinearizedQParams:
    """Constants of the ramp approximation of Q and of its integral.

    ``theta`` is the SNR at which Q equals 1/2, ``beta`` the slope factor,
    ``varrho``/``vartheta`` the SNRs where the ramp reaches 1 and 0, and
    ``zeta2``/``xi2`` the same points on the fading-product axis
    (``varrho`` is clamped at 0 when negative). ``omega1..3`` weight the
    three integrals the ramp splits into.
    """

    mu: float
    theta: float
    beta: float
    varrho: float
    vartheta: float
    zeta2: float
    xi2: float
    omega1: float
    omega2: float
    omega3: float
    clamped: bool


def _slope_factor(rate, n):
    # sqrt(n / 2pi) / sqrt(2^(2r) - 1), in logs so that large rates do not overflow
    x = 2.0 * rate * math.log(2.0)
    log_den = math.log(math.expm1(x)) if x < 30.0 else x + math.log1p(-math.exp(-x))
    return math.sqrt(n / (2.0 * math.pi)) * math.exp(-0.5 * log_den)


def linearization_params(params, alloc):
    mu = mu_factor(params, alloc.v, alloc.n)
    n, k = alloc.n, alloc.k
    rate = k / n
    if rate >= 1000.0:
        raise ValueError(f"rate k/n = {rate:g} bit/cu is beyond floating-point range")
    theta = math.expm1(rate * math.log(2.0))
    beta = _slope_factor(rate, n)
    half_width = SQRT_HALF_PI / beta
    varrho = theta - half_width
    vartheta = theta + half_width
    omega1 = 2.0 / math.gamma(params.m) ** 2
    return LinearizedQParams(
        mu=mu,
        theta=theta,
        beta=beta,
        varrho=varrho,
        vartheta=vartheta,
        zeta2=max(varrho, 0.0) / mu,
        xi2=vartheta / mu,
        omega1=omega1,
        omega2=beta * mu / SQRT_2PI * omega1,
        omega3=(0.5 + beta * theta / SQRT_2PI) * omega1,
        clamped=varrho < 0.0,
    )


def omega(z, qp):
    """Ramp approximation of the block error at fading product ``z``."""
    if z <= qp.zeta2:
        return 1.0
    if z >= qp.xi2:
        return 0.0
    return min(1.0, max(0.0, 0.5 - qp.beta / SQRT_2PI * (qp.mu * z - qp.theta)))


def block_error(gamma, rate, n):
    """Normal-approximation block error at SNR ``gamma``, rate ``rate``, blocklength ``n``."""
    capacity, dispersion = awgn_normal_terms(gamma)
    if dispersion == 0.0:
        # gamma == 0: C - r <= 0 over a vanishing spread
        return 1.0 if rate > 0 else 0.5
    return gauss_q((capacity - rate) / math.sqrt(dispersion / n))


def _block_error_array(gamma, rate, n):
    gamma = np.asarray(gamma, dtype=float)
    capacity = np.log2(1.0 + gamma)
    dispersion = gamma * (gamma + 2.0) / (1.0 + gamma) ** 2 * LOG2E ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = (capacity - rate) / np.sqrt(dispersion / n)
    out = gauss_q(arg)
    zero = dispersion == 0.0
    if np.any(zero):
        out[zero] = 1.0 if rate > 0 else 0.5
    return out


def _flags(alloc, qp=None):
    flags = []
    if alloc.short_blocklength:
        flags.append("short_blocklength")
    if qp is not None and qp.clamped:
        flags.append("zeta_clamped")
    return tuple(flags)


def _clip(p):
    return min(1.0, max(0.0, p))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def _mc_chunk(m, mu, rate, n, size, rng):
    h = sample_std_gamma(m, rng, size)
    g = sample_std_gamma(m, rng, size)
    err = _block_error_array(mu * h * g, rate, n)
    return math.fsum(err), math.fsum(err * err)


def eps_monte_carlo(params, alloc, samples=DEFAULT_MC_SAMPLES, stream=0, jobs=1):
    """Sample-mean estimate with its standard error.

    ``stream`` is a seed (int or ``SeedSequence``) or a ``numpy`` Generator.
    A seed is split into one child stream per chunk of ``MC_CHUNK`` draws,
    so the result depends only on the seed, never on ``jobs``. A Generator
    is consumed sequentially.
    """
    if samples < 1 or samples != int(samples):
        raise ValueError(f"samples must be a positive integer, got {samples}")
    samples = int(samples)
    mu = mu_factor(params, alloc.v, alloc.n)
    rate, n, m = alloc.rate, alloc.n, params.m
    sizes = [MC_CHUNK] * (samples // MC_CHUNK)
    if samples % MC_CHUNK:
        sizes.append(samples % MC_CHUNK)

    if isinstance(stream, np.random.Generator):
        parts = [_mc_chunk(m, mu, rate, n, s, stream) for s in sizes]
    else:
        seq = stream if isinstance(stream, np.random.SeedSequence) else np.random.SeedSequence(stream)
        children = seq.spawn(len(sizes))

        def work(i):
            return _mc_chunk(m, mu, rate, n, sizes[i], make_stream(children[i]))

        if jobs > 1 and len(sizes) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                parts = list(pool.map(work, range(len(sizes))))
        else:
            parts = [work(i) for i in range(len(sizes))]

    total = math.fsum(p[0] for p in parts)
    total_sq = math.fsum(p[1] for p in parts)
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    stderr = math.sqrt(var / (samples - 1)) if samples > 1 else 0.0
    return ErrorProbEstimate(_clip(mean), "monte_carlo", stderr, flags=_flags(alloc))


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def _integrate_pieces(func, nodes, tol):
    """Sum of ``quad`` over consecutive node intervals; returns (value, abserr, ok)."""
    value, error, ok = 0.0, 0.0, True
    for a, b in zip(nodes[:-1], nodes[1:]):
        if b <= a:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(func, a, b, epsabs=0.0, epsrel=tol, limit=400)
            except integrate.IntegrationWarning:
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, err = integrate.quad(func, a, b, epsabs=0.0, epsrel=tol, limit=400)
                ok = ok and err <= 10.0 * tol * abs(val) + 1e-300
        value += val
        error += err
    return value, error, ok


def _density_q(q, m, log_coef):
    """Density of the fading product after the change of variables z = q^2/4."""
    # f_Z(z) dz = 2/Gamma(m)^2 (q/2)^(2m-1) K0(q) dq
    if q <= 0.0:
        return 0.0 if m > 0.5 else math.inf
    return math.exp(log_coef + (2.0 * m - 1.0) * math.log(0.5 * q)) * bessel_k(0, q)


def eps_quadrature(params, alloc, integrand="exact_q", tol=DEFAULT_QUAD_TOL):
    """Adaptive quadrature of the block error against the fading-product density.

    ``integrand`` is ``"exact_q"`` (the normal approximation itself) or
    ``"linearized"`` (its ramp approximation). The integral runs in the
    variable ``q = 2 sqrt(z)``, split at the ramp end points and at the
    SNR where the error crosses 1/2.

    Raises
    ------
    QuadratureError
        if the pieces fail to reach ``tol``; carries the achieved value and error.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if integrand not in ("exact_q", "linearized"):
        raise ValueError(f"unknown integrand {integrand!r}")
    qp = linearization_params(params, alloc)
    m, mu, rate, n = params.m, qp.mu, alloc.rate, alloc.n
    log_coef = math.log(2.0) - 2.0 * math.lgamma(m)

    def to_q(z):
        return 2.0 * math.sqrt(z)

    if integrand == "linearized":
        slope = qp.beta / SQRT_2PI

        def func(q):
            z = 0.25 * q * q
            if z <= qp.zeta2:
                w = 1.0
            else:
                w = 0.5 - slope * (mu * z - qp.theta)
            return w * _density_q(q, m, log_coef)

        nodes = [0.0, to_q(qp.zeta2), to_q(qp.xi2)]
        value, error, ok = _integrate_pieces(func, nodes, tol)
        method = "quadrature_linearized"
    else:
        def func(q):
            z = 0.25 * q * q
            return block_error(mu * z, rate, n) * _density_q(q, m, log_coef)

        nodes = sorted({0.0, to_q(qp.zeta2), to_q(qp.theta / mu), to_q(qp.xi2)})
        value, error, ok = _integrate_pieces(func, nodes, tol)
        # extend past the ramp until the block error is negligible; whatever
        # lies beyond is at most Q(p(cut)) times P(Z > cut)
        z_lo = qp.xi2
        for _ in range(200):
            z_hi = 2.0 * z_lo
            tail_q = block_error(mu * z_hi, rate, n)
            piece, perr, pok = _integrate_pieces(func, [to_q(z_lo), to_q(z_hi)], tol)
            value += piece
            error += perr
            ok = ok and pok
            z_lo = z_hi
            if tail_q <= 1e-3 * tol * value or tail_q < 1e-300:
                error += tail_q
                break
        method = "quadrature_exact"

    if not ok:
        raise QuadratureError(
            f"{method}: quadrature did not reach rel tol {tol:g} "
            f"(value {value:.6e}, error {error:.2e})", value, error)
    return ErrorProbEstimate(_clip(value), method, error, flags=_flags(alloc, qp))


# ---------------------------------------------------------------------------
# Closed form
# ---------------------------------------------------------------------------

def closed_form_terms(qp, m, ctrl=DEFAULT_SERIES):
    """The signed terms of the closed-form linearized error, before summation.

    Each antiderivative contributes a K0 part and a K1 part, so the
    expression is a sum of eight terms (four vanish when ``zeta2 == 0``).
    """
    terms = []
    if qp.zeta2 > 0.0:
        a, b = _zpk0_terms(m - 1.0, qp.zeta2, ctrl)
        terms += [(qp.omega1 - qp.omega3) * a, (qp.omega1 - qp.omega3) * b]
        a, b = _zpk0_terms(m, qp.zeta2, ctrl)
        terms += [qp.omega2 * a, qp.omega2 * b]
    a, b = _zpk0_terms(m - 1.0, qp.xi2, ctrl)
    terms += [qp.omega3 * a, qp.omega3 * b]
    a, b = _zpk0_terms(m, qp.xi2, ctrl)
    terms += [-qp.omega2 * a, -qp.omega2 * b]
    return terms


def eps_closed_form(params, alloc, ctrl=DEFAULT_SERIES, tol=DEFAULT_QUAD_TOL):
    """Closed-form average error probability under the ramp approximation.

    If the series fail to converge or cancellation leaves fewer than
    ``MIN_RELIABLE_DIGITS`` digits, the same integral is done by
    quadrature instead and ``fallback_used`` is set.
    """
    qp = linearization_params(params, alloc)
    flags = _flags(alloc, qp)
    try:
        terms = closed_form_terms(qp, params.m, ctrl)
        digits = reliable_digits(terms)
        if digits < MIN_RELIABLE_DIGITS:
            raise PrecisionLossError(
                f"closed form keeps {digits:.1f} digits", digits)
        value = math.fsum(terms)
        if not math.isfinite(value):
            raise OverflowError("non-finite closed form")
    except (SeriesConvergenceError, PrecisionLossError, OverflowError, ValueError):
        est = eps_quadrature(params, alloc, "linearized", tol)
        return ErrorProbEstimate(est.value, "closed_form", est.uncertainty,
                                 fallback_used=True, flags=flags + ("precision_fallback",))
    return ErrorProbEstimate(_clip(value), "closed_form", 0.0, flags=flags)


def eps_outage_asymptotic(params, alloc, ctrl=DEFAULT_SERIES):
    """Infinite-blocklength outage probability P[log2(1 + mu z) < k/n]."""
    mu = mu_factor(params, alloc.v, alloc.n)
    threshold = math.expm1(alloc.rate * math.log(2.0)) / mu
    omega1 = 2.0 / math.gamma(params.m) ** 2
    value = omega1 * zpk0_antiderivative(params.m - 1.0, threshold, ctrl)
    return ErrorProbEstimate(_clip(value), "asymptotic", 0.0, flags=_flags(alloc))


# ---------------------------------------------------------------------------
# Fixed transmit power baseline
# ---------------------------------------------------------------------------

def energy_outage_probability(params, alloc, p_hat):
    """P[harvested energy < p_hat * n * T_c] over the downlink fading."""
    # E = eta P_D h2 v T_c / (kappa d^alpha) < p_hat n T_c
    h2_needed = p_hat * alloc.n * params.path_loss / (params.eta * params.p_d * alloc.v)
    return float(special.gammainc(params.m, params.m * h2_needed))


def eps_fixed_power(params, alloc, p_hat, tol=DEFAULT_QUAD_TOL):
    """Error probability when the source always transmits at ``p_hat`` watts.

    A round fails if the harvest cannot sustain ``p_hat`` over the ``n``
    WIT channel uses (energy outage), otherwise with the block error at
    SNR ``p_hat * g2 / (kappa d^alpha sigma^2)`` averaged over ``g2``.
    """
    if not p_hat > 0:
        raise ValueError(f"p_hat must be positive, got {p_hat}")
    m, n, rate = params.m, alloc.n, alloc.rate
    p_out = energy_outage_probability(params, alloc, p_hat)
    # SNR = snr_per_u * u with u = m g2 ~ Gamma(m, 1); integrate in s = sqrt(u)
    snr_per_u = p_hat / (m * params.path_loss * params.sigma2_d)
    log_coef = math.log(2.0) - math.lgamma(m)

    def func(s):
        if s <= 0.0:
            return 0.0 if m > 0.5 else 2.0 / math.gamma(m)
        u = s * s
        dens = math.exp(log_coef + (2.0 * m - 1.0) * math.log(s) - u)
        return block_error(snr_per_u * u, rate, n) * dens

    theta = math.expm1(rate * math.log(2.0))
    beta = _slope_factor(rate, n)
    knots = [max(theta - SQRT_HALF_PI / beta, 0.0), theta, theta + SQRT_HALF_PI / beta]
    s_knots = [math.sqrt(x / snr_per_u) for x in knots]
    # the gamma density is negligible beyond u = m + 60 sqrt(m) + 60
    s_max = math.sqrt(m + 60.0 * math.sqrt(m) + 60.0)
    nodes = sorted({0.0, s_max, *[s for s in s_knots if s < s_max]})
    decode, error, ok = _integrate_pieces(func, nodes, tol)
    if not ok:
        raise QuadratureError("fixed-power decode error quadrature failed", decode, error)
    # gamma mass beyond s_max is below 1e-25 and is ignored
    decode = _clip(decode)
    value = p_out + (1.0 - p_out) * decode
    return ErrorProbEstimate(_clip(value), "fixed_power", (1.0 - p_out) * error,
                             flags=_flags(alloc))


# ---------------------------------------------------------------------------

EVALUATORS = {
    "closed_form": eps_closed_form,
    "quadrature_exact": lambda p, a: eps_quadrature(p, a, "exact_q"),
    "quadrature_linearized": lambda p, a: eps_quadrature(p, a, "linearized"),
    "asymptotic": eps_outage_asymptotic,
}


def evaluate(params, alloc, method="closed_form"):
    """Dispatch to one of the deterministic evaluators by method tag."""
    try:
        fn = EVALUATORS[method]
    except KeyError:
        raise ValueError(
            f"method {method!r} is not a deterministic evaluator; "
            f"choose from {sorted(EVALUATORS)}") from None
    return fn(params, alloc)

"""Special-function kernel.

Modified Bessel functions of the second kind (orders 0 and 1), the
``1F2(1; b1, b2; z)`` series, the Gaussian tail function, standard gamma
sampling on splittable random streams, and the closed-form antiderivative
of ``z**p * K0(2*sqrt(z))``.

Everything here works on Python floats; the Gaussian tail also accepts
numpy arrays because the Monte Carlo evaluator needs it in bulk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

EULER_GAMMA = 0.5772156649015329
_EPS = np.finfo(float).eps
# below this argument the power series is used, above it the continued fraction
_BESSEL_SWITCH = 2.0
# 2*sqrt(z) above which Bessel/series products are formed in scaled form
_SCALED_PRODUCT_SWITCH = 20.0
# terms smaller than exp(-_LOG_UNDERFLOW) relative to the scale are dropped
_LOG_UNDERFLOW = 700.0


class SeriesConvergenceError(ArithmeticError):
    """A hypergeometric series ran out of terms before meeting its tolerance."""


class PrecisionLossError(ArithmeticError):
    """Cancellation left fewer reliable digits than required."""

    def __init__(self, message, digits):
        super().__init__(message)
        self.digits = digits


@dataclass(frozen=True)
class SeriesControl:
    """Convergence control for the 1F2 series."""

    rel_tol: float = 1e-15
    max_terms: int = 10_000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_terms < 1:
            raise ValueError(f"max_terms must be >= 1, got {self.max_terms}")


DEFAULT_SERIES = SeriesControl()


# ---------------------------------------------------------------------------
# Bessel K
# ---------------------------------------------------------------------------

def _bessel_k_series(x):
    """K0(x), K1(x) from the ascending series, for 0 < x <= 2."""
    y = 0.25 * x * x
    log_half = math.log(x) - math.log(2.0)

    # K0 = -(ln(x/2) + gamma) I0 + sum y^k/(k!)^2 H_k
    # K1 = 1/x + ln(x/2) I1 - (x/4) sum y^k/(k!(k+1)!) (psi(k+1) + psi(k+2))
    t0 = 1.0            # y^k / (k!)^2
    t1 = 1.0            # y^k / (k! (k+1)!)
    harmonic = 0.0      # H_k
    i0 = 1.0
    i1 = 1.0
    s0 = 0.0
    s1 = 2.0 * (1.0 - EULER_GAMMA) - 1.0  # psi(1) + psi(2)
    k = 0
    while True:
        k += 1
        t0 *= y / (k * k)
        t1 *= y / (k * (k + 1))
        harmonic += 1.0 / k
        i0 += t0
        i1 += t1
        s0 += t0 * harmonic
        # psi(k+1) + psi(k+2) = 2 H_k + 1/(k+1) - 2 gamma
        s1 += t1 * (2.0 * harmonic + 1.0 / (k + 1) - 2.0 * EULER_GAMMA)
        # i0, i1 >= 1 and both results stay above ~0.1 on (0, 2]
        if t0 * (harmonic + 1.0) <= 1e-17 * i0 and t1 * (harmonic + 1.0) <= 1e-17 * i1:
            break
    k0 = -(log_half + EULER_GAMMA) * i0 + s0
    k1 = 1.0 / x + log_half * 0.5 * x * i1 - 0.25 * x * s1
    return k0, k1


def _bessel_k_scaled_cf(x):
    """exp(x) K0(x), exp(x) K1(x) from Steed's continued fraction, x >= 2."""
    # Steed/Temme CF2 for order 0 (see Numerical Recipes, bessik)
    a1 = 0.25
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, 10_000):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    else:  # pragma: no cover
        raise SeriesConvergenceError(f"Bessel continued fraction failed at x={x}")
    h *= a1
    k0 = math.sqrt(math.pi / (2.0 * x)) / s
    k1 = k0 * (x + 0.5 - h) / x
    return k0, k1


def bessel_k(order, x, scaled=False):
    """Modified Bessel function of the second kind, orders 0 and 1.

    Parameters
    ----------
    order : int
        0 or 1.
    x : float
        Positive argument.
    scaled : bool
        Return ``exp(x) * K_order(x)`` instead.
    """
    if order not in (0, 1):
        raise ValueError(f"unsupported Bessel order {order!r}; only 0 and 1")
    x = float(x)
    if not x > 0:
        raise ValueError(f"bessel_k requires x > 0, got {x}")
    if x <= _BESSEL_SWITCH:
        val = _bessel_k_series(x)[order]
        return val * math.exp(x) if scaled else val
    val = _bessel_k_scaled_cf(x)[order]
    return val if scaled else val * math.exp(-x)


# ---------------------------------------------------------------------------
# 1F2(1; b1, b2; z)
# ---------------------------------------------------------------------------

def _log_term(j, b1, b2, log_z):
    return (j * log_z + math.lgamma(b1) - math.lgamma(b1 + j)
            + math.lgamma(b2) - math.lgamma(b2 + j))


def hyp1f2(b1, b2, z, ctrl=DEFAULT_SERIES, log_scale=0.0):
    """Sum ``sum_j z**j / ((b1)_j (b2)_j)``, i.e. 1F2(1; b1, b2; z).

    With ``log_scale`` the result is multiplied by ``exp(-log_scale)``
    without ever forming the unscaled value, so that the series can be
    paired with an exponentially small factor.

    Raises
    ------
    SeriesConvergenceError
        if ``ctrl.max_terms`` terms do not reach ``ctrl.rel_tol``.
    """
    if not (b1 > 0 and b2 > 0):
        raise ValueError(f"hyp1f2 needs b1, b2 > 0, got {b1}, {b2}")
    if z < 0:
        raise ValueError(f"hyp1f2 needs z >= 0, got {z}")
    if z == 0:
        return math.exp(-log_scale)

    j = 0
    if log_scale < _LOG_UNDERFLOW:
        term = math.exp(-log_scale)
    else:
        # skip leading terms that underflow after scaling; they are
        # negligible next to the terms near the peak at j ~ sqrt(z)
        log_z = math.log(z)
        lt = _log_term(0, b1, b2, log_z) - log_scale
        while lt < -_LOG_UNDERFLOW:
            j += 1
            if j >= ctrl.max_terms:
                raise SeriesConvergenceError(
                    f"1F2(1;{b1},{b2};{z}) underflows within max_terms")
            lt = _log_term(j, b1, b2, log_z) - log_scale
        term = math.exp(lt)

    total = 0.0
    comp = 0.0
    n_terms = 0
    while True:
        # Kahan-compensated accumulation
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        n_terms += 1
        ratio = z / ((b1 + j) * (b2 + j))
        term *= ratio
        j += 1
        if ratio < 1.0 and term <= ctrl.rel_tol * total:
            return total
        if n_terms >= ctrl.max_terms:
            raise SeriesConvergenceError(
                f"1F2(1;{b1},{b2};{z}) not converged after {n_terms} terms "
                f"(last term/sum = {term / total:.3e})")


# ---------------------------------------------------------------------------
# Gaussian tail
# ---------------------------------------------------------------------------

def gauss_q(x):
    """Gaussian tail probability ``Q(x) = P(N(0,1) > x)``.

    Accepts a scalar or an array; scalars come back as float.
    """
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(float(x) / math.sqrt(2.0))
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


# ---------------------------------------------------------------------------
# Random streams and gamma variates
# ---------------------------------------------------------------------------

def make_stream(seed):
    """Random-stream handle for ``seed`` (int or ``numpy.random.SeedSequence``)."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def split_streams(seed, count):
    """``count`` independent child streams derived deterministically from ``seed``."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return [make_stream(child) for child in seed.spawn(count)]


def sample_std_gamma(shape, rng, size=None):
    """Draw from the standard gamma law Gamma(shape, scale=1).

    ``shape`` must be at least 0.5 (the Nakagami range).
    """
    if not shape >= 0.5:
        raise ValueError(f"gamma shape must be >= 0.5, got {shape}")
    return rng.standard_gamma(shape, size=size)


# ---------------------------------------------------------------------------
# Antiderivative of z^p K0(2 sqrt z)
# ---------------------------------------------------------------------------

def _zpk0_terms(p, z, ctrl):
    """The two nonnegative terms whose sum is the antiderivative at z > 0."""
    x = 2.0 * math.sqrt(z)
    log_z = math.log(z)
    if x <= _SCALED_PRODUCT_SWITCH:
        k0 = bessel_k(0, x)
        k1 = bessel_k(1, x)
        f_a = hyp1f2(p + 1.0, p + 2.0, z, ctrl)
        f_b = hyp1f2(p + 2.0, p + 2.0, z, ctrl)
    else:
        # exp(x) K_t(x) times exp(-x) 1F2 keeps both factors O(1)-ish
        k0 = bessel_k(0, x, scaled=True)
        k1 = bessel_k(1, x, scaled=True)
        f_a = hyp1f2(p + 1.0, p + 2.0, z, ctrl, log_scale=x)
        f_b = hyp1f2(p + 2.0, p + 2.0, z, ctrl, log_scale=x)
    t_a = math.exp((p + 1.0) * log_z) * k0 * f_a / (p + 1.0)
    t_b = math.exp((p + 1.5) * log_z) * k1 * f_b / (p + 1.0) ** 2
    return t_a, t_b


def zpk0_antiderivative(p, z, ctrl=DEFAULT_SERIES):
    """Integral of ``t**p * K0(2*sqrt(t))`` over ``[0, z]``.

    Uses the closed form

        z^(p+1) K0(2 sqrt z) 1F2(1; p+1, p+2; z) / (p+1)
        + z^(p+3/2) K1(2 sqrt z) 1F2(1; p+2, p+2; z) / (p+1)^2

    whose limit at ``z -> 0`` is zero for every ``p > -1``.
    """
    if not p > -1.0:
        raise ValueError(f"antiderivative needs p > -1, got {p}")
    if z < 0:
        raise ValueError(f"antiderivative needs z >= 0, got {z}")
    if z == 0:
        return 0.0
    t_a, t_b = _zpk0_terms(p, z, ctrl)
    return t_a + t_b


def zpk0_integrand(p, z):
    """``z**p * K0(2*sqrt(z))``; the function ``zpk0_antiderivative`` integrates."""
    return z ** p * bessel_k(0, 2.0 * math.sqrt(z))


def reliable_digits(terms):
    """Significant digits surviving the cancellation in ``sum(terms)``.

    Estimated from the condition number ``sum|t| / |sum t|`` of the sum,
    compared across two summation orders.
    """
    total = math.fsum(terms)
    magnitude = math.fsum(abs(t) for t in terms)
    if magnitude == 0.0:
        return float(np.finfo(float).precision)
    if total == 0.0:
        return 0.0
    naive = 0.0
    for t in reversed(terms):
        naive += t
    disagreement = abs(naive - total) / abs(total)
    cond = magnitude / abs(total)
    digits = -math.log10(max(cond * 4.0 * _EPS, disagreement, _EPS))
    return digits

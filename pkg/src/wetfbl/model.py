"""Link model: system constants, block allocation, SNR factor and densities.

Powers are in watts throughout. A channel realization is described by the
normalized gains ``h2, g2 ~ Gamma(m, 1/m)`` or equivalently by the standard
gamma variates ``h~ = m*h2`` and ``g~ = m*g2``; the uplink SNR is
``mu * h~ * g~``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .specfun import bessel_k

LOG2E = 1.0 / math.log(2.0)
# normal approximation is trusted from this WIT blocklength on
MIN_RELIABLE_N = 100

METHODS = (
    "monte_carlo",
    "quadrature_exact",
    "quadrature_linearized",
    "closed_form",
    "asymptotic",
    "fixed_power",
)


class ShortBlocklengthWarning(UserWarning):
    """WIT blocklength below the range where the normal approximation holds."""


def dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the WET/WIT link.

    Attributes
    ----------
    m : Nakagami shape factor (>= 0.5), shared by both links.
    eta : RF-to-DC conversion efficiency, in (0, 1).
    p_d : transmit power of the destination during WET [W].
    d : source-destination distance [m].
    alpha : path loss exponent.
    kappa : lumped attenuation factor (carrier, antenna heights and gains).
    sigma2_d : noise power at the destination [W].
    t_c : duration of one channel use [s].
    """

    m: float = 3.0
    eta: float = 0.5
    p_d: float = 1.0
    d: float = 12.0
    alpha: float = 3.0
    kappa: float = 1e3
    sigma2_d: float = 1e-14
    t_c: float = 3e-6

    def __post_init__(self):
        if not self.m >= 0.5:
            raise ValueError(f"m must be >= 0.5, got {self.m}")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        for name in ("p_d", "d", "alpha", "kappa", "sigma2_d", "t_c"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")

    @property
    def path_loss(self):
        """kappa * d**alpha, the one-way attenuation."""
        return self.kappa * self.d ** self.alpha


@dataclass(frozen=True)
class BlockAllocation:
    """WET blocklength ``v``, WIT blocklength ``n`` and message size ``k`` bits."""

    v: int
    n: int
    k: int
    short_blocklength: bool = field(init=False, compare=False)

    def __post_init__(self):
        for name in ("v", "n", "k"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        object.__setattr__(self, "short_blocklength", self.n < MIN_RELIABLE_N)
        if self.short_blocklength:
            warnings.warn(
                f"n={self.n} < {MIN_RELIABLE_N}: normal approximation may be inaccurate",
                ShortBlocklengthWarning,
                stacklevel=2,
            )

    @property
    def rate(self):
        return self.k / self.n

    @property
    def delay(self):
        return self.n + self.v

    @property
    def time_share(self):
        return self.v / (self.n + self.v)


@dataclass(frozen=True)
class ErrorProbEstimate:
    """An error probability with the method that produced it.

    ``uncertainty`` is the Monte Carlo standard error or the quadrature
    error estimate (0 for closed-form values). ``flags`` carries regime
    notes such as ``"zeta_clamped"`` or ``"short_blocklength"``.
    """

    value: float
    method: str
    uncertainty: float = 0.0
    fallback_used: bool = False
    flags: tuple = ()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"probability out of range: {self.value}")
        if not self.uncertainty >= 0.0:
            raise ValueError(f"negative uncertainty: {self.uncertainty}")

    def __float__(self):
        return float(self.value)


def mu_factor(params, v, n):
    """SNR scale ``mu`` such that the uplink SNR is ``mu * h~ * g~``."""
    if v < 1 or n < 1:
        raise ValueError(f"v and n must be >= 1, got v={v}, n={n}")
    return (params.eta * v * params.p_d
            / (params.m ** 2 * n * params.path_loss ** 2 * params.sigma2_d))


def product_pdf(z, m):
    """Density of the product of two independent Gamma(m, 1) variates."""
    if not z > 0:
        raise ValueError(f"product_pdf requires z > 0, got {z}")
    if not m >= 0.5:
        raise ValueError(f"m must be >= 0.5, got {m}")
    log_coef = math.log(2.0) - 2.0 * math.lgamma(m)
    return math.exp(log_coef + (m - 1.0) * math.log(z)) * bessel_k(0, 2.0 * math.sqrt(z))


def awgn_normal_terms(gamma):
    """Capacity [bit/cu] and dispersion [bit^2/cu] of an AWGN channel at SNR ``gamma``."""
    if gamma < 0:
        raise ValueError(f"SNR must be nonnegative, got {gamma}")
    capacity = math.log2(1.0 + gamma)
    # 1 - 1/(1+g)^2 = g(g+2)/(1+g)^2, no cancellation near 0
    dispersion = gamma * (gamma + 2.0) / (1.0 + gamma) ** 2 * LOG2E ** 2
    return capacity, dispersion


def allocation_metrics(alloc):
    """(rate, delay, time share) = (k/n, n+v, v/(n+v))."""
    return alloc.rate, alloc.delay, alloc.time_share


def energy_budget(params, v, n, h2):
    """Energy harvested in ``v`` channel uses and the resulting WIT power.

    ``h2`` is the downlink power gain (normalized, mean 1). Returns
    ``(joules, watts)`` with the whole harvest spent over ``n`` channel uses.
    """
    if h2 < 0:
        raise ValueError(f"channel gain must be nonnegative, got {h2}")
    harvested = params.eta * params.p_d * h2 * v * params.t_c / params.path_loss
    tx_power = harvested / (n * params.t_c)
    return harvested, tx_power


def received_snr(params, tx_power, g2):
    """Uplink SNR for transmit power ``tx_power`` and uplink gain ``g2``."""
    return tx_power * g2 / (params.path_loss * params.sigma2_d)

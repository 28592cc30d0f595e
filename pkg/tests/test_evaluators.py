import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from wetfbl.evaluators import (
    block_error,
    closed_form_terms,
    energy_outage_probability,
    eps_closed_form,
    eps_fixed_power,
    eps_monte_carlo,
    eps_outage_asymptotic,
    eps_quadrature,
    evaluate,
    linearization_params,
    omega,
)
from wetfbl.model import BlockAllocation, ShortBlocklengthWarning, SystemParams
from wetfbl.specfun import SeriesControl, zpk0_antiderivative

warnings.simplefilter("ignore", ShortBlocklengthWarning)

REF = SystemParams()


def params_m(m):
    return SystemParams(m=m)


def test_linearization_constants_reference_point():
    # independent high-precision evaluation of the ramp constants
    v, n, k = 3000, 300, 216
    qp = linearization_params(REF, BlockAllocation(v, n, k))
    with mpmath.workdps(30):
        mu = mpmath.mpf("0.5") * v / (9 * n * mpmath.mpf(10) ** 6 * 12 ** 6 * mpmath.mpf("1e-14"))
        theta = mpmath.mpf(2) ** (mpmath.mpf(k) / n) - 1
        beta = mpmath.sqrt(n / (2 * mpmath.pi)) / mpmath.sqrt(mpmath.mpf(2) ** (2 * mpmath.mpf(k) / n) - 1)
        half = mpmath.sqrt(mpmath.pi / 2) / beta
        w1 = 2 / mpmath.gamma(3) ** 2
        expected = {
            "mu": mu, "theta": theta, "beta": beta,
            "varrho": theta - half, "vartheta": theta + half,
            "zeta2": (theta - half) / mu, "xi2": (theta + half) / mu,
            "omega1": w1, "omega2": beta * mu / mpmath.sqrt(2 * mpmath.pi) * w1,
            "omega3": (mpmath.mpf("0.5") + beta * theta / mpmath.sqrt(2 * mpmath.pi)) * w1,
        }
    for name, value in expected.items():
        assert getattr(qp, name) == pytest.approx(float(value), rel=1e-13), name
    assert not qp.clamped


def test_linearization_rejects_huge_rate():
    with pytest.raises(ValueError):
        linearization_params(REF, BlockAllocation(1, 1, 1500))


def test_linearization_k_equals_n():
    qp = linearization_params(REF, BlockAllocation(50, 400, 400))
    assert qp.theta == pytest.approx(1.0, rel=1e-15)
    assert qp.beta == pytest.approx(math.sqrt(400 / (2 * math.pi)) / math.sqrt(3), rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10 ** 5), st.integers(1, 5000), st.integers(1, 2000))
def test_linearization_ordering(v, n, k):
    assume(k / n < 1000)
    qp = linearization_params(REF, BlockAllocation(v, n, k))
    assert qp.varrho < qp.theta < qp.vartheta
    assert 0 <= qp.zeta2 < qp.xi2
    assert qp.omega1 > 0 and qp.omega2 > 0 and qp.omega3 > 0
    assert qp.clamped == (qp.varrho < 0)


def test_omega_branches():
    qp = linearization_params(REF, BlockAllocation(3000, 300, 216))
    assert omega(qp.theta / qp.mu, qp) == pytest.approx(0.5, abs=1e-15)
    assert omega(qp.xi2 + 1, qp) == 0.0
    assert omega(qp.zeta2 / 2, qp) == 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10 ** 4), st.integers(100, 3000), st.integers(10, 500),
       st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_omega_is_a_nonincreasing_probability(v, n, k, a, b):
    qp = linearization_params(REF, BlockAllocation(v, n, k))
    za, zb = sorted((a * 2 * qp.xi2, b * 2 * qp.xi2))
    wa, wb = omega(za, qp), omega(zb, qp)
    assert 0.0 <= wb <= wa <= 1.0


def test_zero_dispersion_guard():
    assert block_error(0.0, 0.5, 100) == 1.0
    assert block_error(1e-300, 0.5, 100) == pytest.approx(1.0)
    assert np.isfinite(block_error(0.0, 0.0, 100))


def test_linearized_quadrature_equals_three_segment_sum():
    for m, (v, n, k) in [(3, (3000, 300, 216)), (2, (400, 1000, 96)), (1, (50, 100, 320))]:
        p = params_m(m)
        a = BlockAllocation(v, n, k)
        qp = linearization_params(p, a)

        def seg(power, lo, hi):
            return zpk0_antiderivative(power, hi) - zpk0_antiderivative(power, lo)

        assembled = (qp.omega1 * seg(m - 1, 0, qp.zeta2)
                     - qp.omega2 * seg(m, qp.zeta2, qp.xi2)
                     + qp.omega3 * seg(m - 1, qp.zeta2, qp.xi2))
        quad = eps_quadrature(p, a, "linearized", tol=1e-11).value
        assert quad == pytest.approx(assembled, rel=1e-8)


@pytest.mark.parametrize("m", [0.5, 0.75, 1.0, 2.5, 3.0])
@pytest.mark.parametrize("v,n,k", [(3000, 300, 216), (200, 1000, 96), (10, 100, 320), (100, 100, 10)])
def test_closed_form_matches_linearized_quadrature(m, v, n, k):
    p = params_m(m)
    a = BlockAllocation(v, n, k)
    cf = eps_closed_form(p, a)
    assert not cf.fallback_used
    assert cf.value == pytest.approx(eps_quadrature(p, a, "linearized", tol=1e-11).value, rel=1e-6)


def test_closed_form_clamped_regime():
    a = BlockAllocation(100, 100, 10)
    cf = eps_closed_form(REF, a)
    assert "zeta_clamped" in cf.flags
    assert len(closed_form_terms(linearization_params(REF, a), 3.0)) == 4
    assert cf.value == pytest.approx(eps_quadrature(REF, a, "linearized").value, rel=1e-8)


def test_closed_form_fallback():
    a = BlockAllocation(30, 300, 216)
    cf = eps_closed_form(REF, a, ctrl=SeriesControl(max_terms=2))
    assert cf.fallback_used
    assert "precision_fallback" in cf.flags
    assert cf.value == pytest.approx(eps_quadrature(REF, a, "linearized").value, rel=1e-9)


def test_closed_form_nonincreasing_when_v_doubles():
    for n, k in [(100, 96), (300, 216), (1000, 320)]:
        vals = [eps_closed_form(REF, BlockAllocation(v, n, k)).value for v in 2 ** np.arange(0, 22)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_exact_quadrature_zero_rate_limit():
    assert eps_quadrature(REF, BlockAllocation(10 ** 6, 10 ** 6, 1)).value < 1e-10


def test_quadrature_validates_arguments():
    a = BlockAllocation(10, 100, 10)
    with pytest.raises(ValueError):
        eps_quadrature(REF, a, "exact_q", tol=0)
    with pytest.raises(ValueError):
        eps_quadrature(REF, a, "saddlepoint")


def test_exact_quadrature_against_independent_integral():
    # same integral in z with scipy's Bessel K0 and Q
    p, a = REF, BlockAllocation(800, 300, 216)
    mu = 0.5 * 800 / (9 * 300 * 1e6 * 12 ** 6 * 1e-14)
    r = 216 / 300

    def f(z):
        g = mu * z
        c = math.log2(1 + g)
        v = (1 - 1 / (1 + g) ** 2) * math.log2(math.e) ** 2
        # density 2/Gamma(3)^2 z^2 K0(2 sqrt z)
        return special.ndtr(-(c - r) / math.sqrt(v / 300)) * 0.5 * z ** 2 * special.k0(2 * math.sqrt(z))

    total = 0.0
    for lo, hi in [(0, 1e-3), (1e-3, 0.02), (0.02, 0.05), (0.05, 1.0), (1.0, 50.0)]:
        total += integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-11, limit=200)[0]
    assert eps_quadrature(p, a).value == pytest.approx(total, rel=1e-7)


def test_monte_carlo_limits():
    hi = eps_monte_carlo(REF, BlockAllocation(10 ** 9, 100, 100), 10 ** 5, 1)
    assert hi.value <= 3 * hi.uncertainty + 1e-12
    lo = eps_monte_carlo(REF, BlockAllocation(10, 100, 10 ** 6), 10 ** 5, 1)
    assert 1 - lo.value <= 3 * lo.uncertainty + 1e-12


@pytest.mark.parametrize("m,v,n,k", [(3, 300, 300, 216), (1, 400, 100, 96), (2, 2000, 1000, 320)])
def test_monte_carlo_agrees_with_exact_quadrature(m, v, n, k):
    p = params_m(m)
    a = BlockAllocation(v, n, k)
    mc = eps_monte_carlo(p, a, 10 ** 6, 2024)
    exact = eps_quadrature(p, a).value
    assert abs(mc.value - exact) < 4 * mc.uncertainty


def test_monte_carlo_deterministic_and_job_independent():
    a = BlockAllocation(300, 300, 216)
    one = eps_monte_carlo(REF, a, 600_000, 99, jobs=1)
    many = eps_monte_carlo(REF, a, 600_000, 99, jobs=4)
    assert one == many
    again = eps_monte_carlo(REF, a, 600_000, np.random.SeedSequence(99))
    assert again == one
    other = eps_monte_carlo(REF, a, 600_000, 100)
    assert other.value != one.value
    gen = eps_monte_carlo(REF, a, 1000, np.random.default_rng(5))
    assert gen == eps_monte_carlo(REF, a, 1000, np.random.default_rng(5))
    with pytest.raises(ValueError):
        eps_monte_carlo(REF, a, 0)


def test_outage_against_direct_quadrature():
    for m, (v, n, k) in [(3, (3000, 300, 216)), (1, (100, 100, 96)), (2, (40, 1000, 320))]:
        p = params_m(m)
        a = BlockAllocation(v, n, k)
        mu = 0.5 * v / (m * m * n * 1e6 * 12 ** 6 * 1e-14)
        thr = (2 ** (k / n) - 1) / mu
        ref = integrate.quad(lambda z: 2 / math.gamma(m) ** 2 * z ** (m - 1) * special.k0(2 * math.sqrt(z)),
                             0, thr, epsabs=0, epsrel=1e-12, limit=200)[0]
        assert eps_outage_asymptotic(p, a).value == pytest.approx(ref, rel=1e-8)


def test_outage_zero_rate():
    assert eps_outage_asymptotic(REF, BlockAllocation(10 ** 6, 10 ** 6, 1)).value < 1e-15


def test_finite_blocklength_gap_shrinks_with_k():
    # fixed rate 0.72 and fixed v/n: gap between exact normal approximation and outage
    gaps = []
    for k in (96, 216, 320, 640):
        n = round(k / 0.72)
        a = BlockAllocation(10 * n, n, k)
        exact = eps_quadrature(REF, a).value
        gaps.append((exact - eps_outage_asymptotic(REF, a).value) / exact)
    assert all(g > 0 for g in gaps)
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[1] < 0.1


def test_energy_outage_against_series():
    a = BlockAllocation(1000, 200, 216)
    p_hat = 2e-6
    thr = p_hat * 200 * 1e3 * 12 ** 3 / (0.5 * 1.0 * 1000)
    x = 3 * thr
    term, series = 1.0 / 6.0, 0.0  # x^j / Gamma(3 + j + 1)
    for j in range(200):
        series += term
        term *= x / (4 + j)
    series *= x ** 3 * math.exp(-x)
    assert energy_outage_probability(REF, a, p_hat) == pytest.approx(series, rel=1e-12)


def test_fixed_power_limits():
    a = BlockAllocation(1000, 300, 216)
    assert eps_fixed_power(REF, a, 1e-30).value == pytest.approx(1.0, abs=1e-9)
    assert eps_fixed_power(REF, a, 1e3).value == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        eps_fixed_power(REF, a, 0.0)


def test_fixed_power_worse_than_adaptive():
    a = BlockAllocation(2500, 400, 216)
    powers = np.geomspace(1e-9, 1e-4, 121)
    best = min(eps_fixed_power(REF, a, p).value for p in powers)
    assert best > eps_closed_form(REF, a).value


def test_fixed_power_decode_term_against_monte_carlo():
    a = BlockAllocation(1000, 300, 216)
    p_hat = 3e-7
    est = eps_fixed_power(REF, a, p_hat).value
    rng = np.random.default_rng(11)
    h2 = rng.gamma(3, 1 / 3, 10 ** 6)
    g2 = rng.gamma(3, 1 / 3, 10 ** 6)
    harvested = 0.5 * h2 * 1000 / (1e3 * 12 ** 3)  # per unit T_c
    ok = harvested >= p_hat * 300
    snr = p_hat * g2 / (1e3 * 12 ** 3 * 1e-14)
    c = np.log2(1 + snr)
    disp = (1 - 1 / (1 + snr) ** 2) * np.log2(np.e) ** 2
    err = np.where(ok, special.ndtr(-(c - 216 / 300) / np.sqrt(disp / 300)), 1.0)
    se = err.std() / math.sqrt(err.size)
    assert abs(err.mean() - est) < 4 * se


STANDARD = [(m, k, n) for m in (1, 2, 3) for k in (96, 216, 320) for n in (100, 300, 1000)]


@pytest.mark.parametrize("m,k,n", STANDARD)
def test_evaluators_nonincreasing_in_v_and_bounded(m, k, n):
    p = params_m(m)
    vs = np.unique(np.geomspace(1, 2e5, 9).round().astype(int))
    for method in ("closed_form", "quadrature_exact", "quadrature_linearized", "asymptotic"):
        vals = [evaluate(p, BlockAllocation(int(v), n, k), method).value for v in vs]
        assert all(0.0 <= x <= 1.0 and not math.isnan(x) for x in vals)
        assert all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:])), method


def test_evaluate_rejects_unknown_method():
    with pytest.raises(ValueError):
        evaluate(REF, BlockAllocation(1, 100, 1), "monte_carlo")

import warnings

import numpy as np
import pytest

from wetfbl.evaluators import eps_quadrature
from wetfbl.model import BlockAllocation, ShortBlocklengthWarning, SystemParams
from wetfbl.optimizer import (
    best_fixed_power,
    delay_profile,
    min_delay,
    min_error_given_delay,
    min_wet_blocklength,
)

warnings.simplefilter("ignore", ShortBlocklengthWarning)

P = SystemParams()


def oracle_eps(v, n, k):
    return eps_quadrature(P, BlockAllocation(v, n, k), "linearized").value


def test_one_wet_use_suffices_for_loose_target():
    n, k = 1000, 50
    assert oracle_eps(1, n, k) <= 0.999
    res = min_wet_blocklength(P, k, n, 0.999)
    assert res.v_star == 1 and res.feasible


def test_loose_target_still_needs_more_at_high_rate():
    n, k = 300, 216
    assert oracle_eps(1, n, k) > 0.999
    res = min_wet_blocklength(P, k, n, 0.999)
    assert res.v_star > 1
    assert oracle_eps(res.v_star - 1, n, k) > 0.999 >= oracle_eps(res.v_star, n, k)


def test_bisection_minimal_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        n = int(rng.integers(100, 1500))
        k = int(rng.integers(32, 400))
        eps0 = float(10 ** rng.uniform(-6, -1))
        res = min_wet_blocklength(P, k, n, eps0)
        assert res.feasible
        assert res.delta_star == res.n_star + res.v_star
        assert oracle_eps(res.v_star, n, k) <= eps0 * (1 + 1e-6)
        if res.v_star > 1:
            assert oracle_eps(res.v_star - 1, n, k) > eps0 * (1 - 1e-6)


@pytest.mark.parametrize("n,k,eps0", [(300, 216, 1e-3), (800, 96, 1e-5)])
def test_bisection_with_exact_evaluator(n, k, eps0):
    res = min_wet_blocklength(P, k, n, eps0, evaluator="quadrature_exact")
    exact = lambda v: eps_quadrature(P, BlockAllocation(v, n, k), "exact_q").value
    assert exact(res.v_star) <= eps0 < exact(res.v_star - 1)


def test_infeasible_reports_v_max():
    res = min_wet_blocklength(P, 216, 300, 1e-5, v_max=50)
    assert not res.feasible
    assert res.v_star == 50
    assert res.eps_achieved > 1e-5


def test_rejects_bad_target():
    with pytest.raises(ValueError):
        min_wet_blocklength(P, 216, 300, 1.0)
    with pytest.raises(ValueError):
        min_wet_blocklength(P, 216, 300, 0.0)


def test_min_delay_matches_brute_force_small_grid():
    k, eps0 = 216, 1e-3
    ns = range(100, 201, 10)
    brute = []
    for n in ns:
        v = min_wet_blocklength(P, k, n, eps0).v_star
        brute.append((n + v, n))
    res = min_delay(P, k, eps0, n_min=100, n_max=200, n_step=10, certify=False)
    assert (res.delta_star, res.n_star) == min(brute)


def test_wet_share_shrinks_as_n_grows():
    ns = np.unique(np.geomspace(100, 5000, 40).round().astype(int))
    for eps0 in (1e-3, 1e-5):
        nu = [r.nu for r in delay_profile(P, 216, eps0, ns)]
        assert all(b <= a for a, b in zip(nu, nu[1:]))


def test_tighter_target_costs_more_delay():
    loose = min_delay(P, 216, 1e-3, n_step=5, certify=False)
    tight = min_delay(P, 216, 1e-5, n_step=5)
    assert tight.delta_star > loose.delta_star
    assert tight.n_star > loose.n_star
    assert tight.eps_certified is not None
    assert tight.eps_certified == pytest.approx(tight.eps_achieved, rel=0.1)


def test_min_error_given_delay():
    k = 216
    deltas = [800, 1600, 3200]
    results = [min_error_given_delay(P, k, d, n_step=5) for d in deltas]
    eps = [e for e, _ in results]
    assert all(b < a for a, b in zip(eps, eps[1:]))
    assert all(100 <= n < d for (_, n), d in zip(results, deltas))


def test_min_error_at_optimal_delay_meets_target():
    res = min_delay(P, 216, 1e-3, n_step=1, certify=False)
    eps, _ = min_error_given_delay(P, 216, res.delta_star)
    assert eps <= 1e-3


def test_fixed_power_worse_than_adaptive():
    k, delta = 216, 2000
    p_hat, eps_fixed, n_fixed = best_fixed_power(P, k, delta)
    eps_adapt, n_adapt = min_error_given_delay(P, k, delta, n_step=2)
    assert isinstance(p_hat, float) and p_hat > 0
    assert eps_fixed >= eps_adapt
    assert abs(n_fixed - n_adapt) < 0.25 * n_adapt

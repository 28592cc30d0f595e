"""Blocklength allocation under reliability and latency targets.

The error probability is nonincreasing in the WET blocklength ``v`` at
fixed ``(n, k)``, so the smallest ``v`` meeting a target is found by
bracketing and integer bisection. The WIT blocklength is searched on a
coarse geometric grid with exhaustive refinement around the best points,
because the delay curve over ``n`` is only empirically unimodal.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .evaluators import eps_fixed_power, eps_quadrature, evaluate
from .model import BlockAllocation, ShortBlocklengthWarning

DEFAULT_V_MAX = 10 ** 9
COARSE_POINTS = 40
REFINE_CANDIDATES = 3


@dataclass(frozen=True)
class OptimizationResult:
    """Outcome of a blocklength search.

    ``eps_achieved`` comes from ``evaluator``; ``eps_certified`` is the
    exact-Q quadrature at the returned point when certification ran.
    For an infeasible search the fields describe the best point found.
    """

    eps_target: float
    v_star: int
    n_star: int
    delta_star: int
    delta_seconds: float
    nu: float
    eps_achieved: float
    feasible: bool
    evaluator: str
    eps_certified: float | None = None


def _eps(params, v, n, k, evaluator):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ShortBlocklengthWarning)
        alloc = BlockAllocation(v, n, k)
    return evaluate(params, alloc, evaluator).value


def _result(params, eps0, v, n, eps, feasible, evaluator):
    return OptimizationResult(
        eps_target=eps0,
        v_star=v,
        n_star=n,
        delta_star=n + v,
        delta_seconds=(n + v) * params.t_c,
        nu=v / (n + v),
        eps_achieved=eps,
        feasible=feasible,
        evaluator=evaluator,
    )


def min_wet_blocklength(params, k, n, eps0, evaluator="closed_form", v_max=DEFAULT_V_MAX):
    """Smallest integer ``v <= v_max`` with error probability at most ``eps0``.

    Brackets from ``v = n`` by halving or doubling, then bisects. Returns
    an ``OptimizationResult`` with ``n_star == n``; when no ``v`` qualifies
    ``feasible`` is False and the point ``v = v_max`` is reported.
    """
    if not 0.0 < eps0 < 1.0:
        raise ValueError(f"eps0 must lie in (0, 1), got {eps0}")
    if n < 1 or v_max < 1:
        raise ValueError(f"n and v_max must be >= 1, got n={n}, v_max={v_max}")

    def eps(v):
        return _eps(params, v, n, k, evaluator)

    v = min(n, v_max)
    e = eps(v)
    if e <= eps0:
        # halve down to a failing point (or to v = 1)
        hi, e_hi = v, e
        lo = None
        while hi > 1:
            cand = hi // 2
            e_c = eps(cand)
            if e_c <= eps0:
                hi, e_hi = cand, e_c
            else:
                lo = cand
                break
        if lo is None:
            return _result(params, eps0, hi, n, e_hi, True, evaluator)
    else:
        lo = v
        hi = None
        while lo < v_max:
            cand = min(2 * lo, v_max)
            e_c = eps(cand)
            if e_c <= eps0:
                hi, e_hi = cand, e_c
                break
            lo = cand
        if hi is None:
            return _result(params, eps0, v_max, n, eps(v_max), False, evaluator)

    # invariant: eps(lo) > eps0 >= eps(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        e_mid = eps(mid)
        if e_mid <= eps0:
            hi, e_hi = mid, e_mid
        else:
            lo = mid
    return _result(params, eps0, hi, n, e_hi, True, evaluator)


def _n_candidates(n_min, n_max, n_step):
    return np.arange(n_min, n_max + 1, n_step, dtype=np.int64)


def _coarse_indices(count, points):
    """Indices of a geometric-ish subset of ``range(count)`` including both ends."""
    if count <= points:
        return list(range(count))
    idx = np.unique(np.round(np.geomspace(1, count, points)).astype(int) - 1)
    return sorted(set(idx.tolist()) | {0, count - 1})


def _sort_key(r):
    if r.feasible:
        return (0, r.delta_star, r.n_star, r.v_star)
    return (1, r.eps_achieved, r.n_star, 0)


def _map(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def delay_profile(params, k, eps0, ns, evaluator="closed_form", v_max=DEFAULT_V_MAX, jobs=1):
    """Per-``n`` minimum WET blocklength for each ``n`` in ``ns``."""
    return _map(lambda n: min_wet_blocklength(params, k, int(n), eps0, evaluator, v_max),
                list(ns), jobs)


def min_delay(params, k, eps0, n_min=100, n_max=5000, n_step=1,
              evaluator="closed_form", v_max=DEFAULT_V_MAX, certify=True, jobs=1):
    """Minimum total delay ``n + v`` meeting ``eps0``, over ``n`` in the grid.

    The grid is ``n_min, n_min + n_step, ..., <= n_max``. About
    ``COARSE_POINTS`` of its points are scanned first, then every grid
    point between the coarse neighbours of the best few coarse points.
    With ``certify`` the optimum is re-evaluated by exact-Q quadrature.
    """
    if n_min > n_max:
        raise ValueError(f"n_min={n_min} exceeds n_max={n_max}")
    grid = _n_candidates(n_min, n_max, n_step)
    cache = {}

    def solve(i):
        if i not in cache:
            cache[i] = min_wet_blocklength(params, k, int(grid[i]), eps0, evaluator, v_max)
        return cache[i]

    coarse = _coarse_indices(len(grid), COARSE_POINTS)
    _map(solve, coarse, jobs)
    ranked = sorted(coarse, key=lambda i: _sort_key(cache[i]))
    refine = set()
    pos = {i: j for j, i in enumerate(coarse)}
    for i in ranked[:REFINE_CANDIDATES]:
        j = pos[i]
        lo = coarse[j - 1] if j > 0 else i
        hi = coarse[j + 1] if j + 1 < len(coarse) else i
        refine.update(range(lo, hi + 1))
    _map(solve, sorted(refine - cache.keys()), jobs)
    best = min((cache[i] for i in sorted(cache)), key=_sort_key)
    if certify and best.feasible:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ShortBlocklengthWarning)
            alloc = BlockAllocation(best.v_star, best.n_star, k)
        cert = eps_quadrature(params, alloc, "exact_q").value
        best = OptimizationResult(**{**best.__dict__, "eps_certified": cert})
    return best


def min_error_given_delay(params, k, delta, n_floor=100, n_step=1,
                          evaluator="closed_form", jobs=1):
    """Smallest error probability with ``n + v == delta``; returns ``(eps*, n*)``.

    Scans every ``n`` in ``n_floor, n_floor + n_step, ..., delta - 1``
    (``n_floor`` drops to 1 when ``delta`` is too small for it).
    """
    if delta < 2:
        raise ValueError(f"delta must be >= 2, got {delta}")
    if n_floor > delta - 1:
        n_floor = 1
    ns = list(range(n_floor, delta, n_step))
    eps = _map(lambda n: _eps(params, delta - n, n, k, evaluator), ns, jobs)
    best = int(np.argmin(eps))  # first minimum: ties go to the smaller n
    return eps[best], ns[best]


def _best_power_for_n(params, alloc, log_p_grid):
    """Grid search plus bounded refinement of log10(p_hat) for one allocation."""
    vals = [eps_fixed_power(params, alloc, 10.0 ** lp).value for lp in log_p_grid]
    i = int(np.argmin(vals))
    lo = log_p_grid[max(i - 1, 0)]
    hi = log_p_grid[min(i + 1, len(log_p_grid) - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda lp: eps_fixed_power(params, alloc, 10.0 ** lp).value,
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-4})
        if res.fun < vals[i]:
            return 10.0 ** res.x, float(res.fun), i
    return 10.0 ** log_p_grid[i], vals[i], i


def _power_scale(params, v, n):
    """Transmit power obtained with unit downlink gain."""
    return params.eta * v * params.p_d / (n * params.path_loss)


def best_fixed_power(params, k, delta, n_floor=100, n_points=24,
                     p_decades=(-4.0, 1.0), p_points=31, jobs=1):
    """Best fixed transmit power and WIT blocklength at total delay ``delta``.

    Returns ``(p_hat*, eps*, n*)``. For each ``n`` on a geometric grid the
    power is searched on a log grid centred on the mean harvested power
    (``p_decades`` around it), which widens whenever the optimum lands on
    an edge; the best ``n`` is then refined over its grid neighbours.
    """
    if delta < 2:
        raise ValueError(f"delta must be >= 2, got {delta}")
    if n_floor > delta - 1:
        n_floor = 1
    all_n = np.arange(n_floor, delta, dtype=np.int64)
    coarse = [int(all_n[i]) for i in _coarse_indices(len(all_n), n_points)]
    cache = {}

    def solve(n):
        if n in cache:
            return cache[n]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ShortBlocklengthWarning)
            alloc = BlockAllocation(delta - n, n, k)
        centre = math.log10(_power_scale(params, delta - n, n))
        lo, hi = p_decades
        for _ in range(20):
            grid = np.linspace(centre + lo, centre + hi, p_points)
            p, e, i = _best_power_for_n(params, alloc, grid)
            if 0 < i < p_points - 1:
                break
            # optimum on the edge: widen that side
            if i == 0:
                lo -= 3.0
            else:
                hi += 3.0
        cache[n] = (p, e)
        return cache[n]

    _map(solve, coarse, jobs)
    j = min(range(len(coarse)), key=lambda t: (cache[coarse[t]][1], coarse[t]))
    lo = coarse[j - 1] if j > 0 else coarse[j]
    hi = coarse[j + 1] if j + 1 < len(coarse) else coarse[j]
    ns = list(range(lo, hi + 1))
    if len(ns) > 60:
        ns = sorted(set(np.linspace(lo, hi, 60).round().astype(int).tolist()))
    _map(solve, [n for n in ns if n not in cache], jobs)
    n_star = min(cache, key=lambda n: (cache[n][1], n))
    p_star, eps_star = cache[n_star]
    return float(p_star), float(eps_star), int(n_star)

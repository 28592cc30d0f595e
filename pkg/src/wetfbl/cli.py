"""Command-line front end: ``wetfbl eval | validate | sweep``.

A scenario is a flat ``key = value`` file (``#`` starts a comment). Power
quantities take exactly one of a ``_dbm`` or ``_w`` key, ``kappa`` may be
given linearly or as ``kappa_db``. List-valued keys are comma separated.
Results are written as CSV, to ``--out`` or the config ``output`` key or
stdout. Exit codes: 0 success, 1 analytic or feasibility failure, 2 bad
configuration or arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import evaluators as ev
from .model import (
    BlockAllocation,
    ShortBlocklengthWarning,
    SystemParams,
    db_to_linear,
    dbm_to_watts,
)
from .optimizer import (
    DEFAULT_V_MAX,
    best_fixed_power,
    delay_profile,
    min_delay,
    min_error_given_delay,
    min_wet_blocklength,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
IDENTITY_RTOL = 1e-6
SWEEP_MODES = ("delay_vs_n", "min_delay_vs_k", "eps_vs_delta", "fixed_power_vs_delta")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

_PLAIN_REQUIRED = ("m", "eta", "d", "alpha", "t_c")
_DUAL = {
    "p_d": ("p_d_dbm", "p_d_w", dbm_to_watts),
    "sigma2_d": ("sigma2_d_dbm", "sigma2_d_w", dbm_to_watts),
    "kappa": ("kappa_db", "kappa", db_to_linear),
}


@dataclass
class ScenarioConfig:
    params: SystemParams
    k_bits: list = field(default_factory=lambda: [216])
    eps_target: list = field(default_factory=lambda: [1e-5])
    n_min: int = 100
    n_max: int = 5000
    n_step: int = 1
    n_points: int = 40
    delta: list = field(default_factory=lambda: [1000, 2000, 3000])
    mc_samples: int = ev.DEFAULT_MC_SAMPLES
    seed: int = 0
    v_max: int = DEFAULT_V_MAX
    output: str | None = None
    grid_m: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    grid_k: list = field(default_factory=lambda: [96, 216, 320])
    grid_n: list = field(default_factory=lambda: [100, 300, 1000])
    grid_eps: list = field(default_factory=lambda: [0.5, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5])


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _list(conv):
    def parse(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        return [conv(t) for t in items]
    return parse


_SCENARIO_KEYS = {
    "k_bits": _list(_int),
    "eps_target": _list(float),
    "n_min": _int,
    "n_max": _int,
    "n_step": _int,
    "n_points": _int,
    "delta": _list(_int),
    "mc_samples": _int,
    "seed": _int,
    "v_max": _int,
    "output": str,
    "grid_m": _list(float),
    "grid_k": _list(_int),
    "grid_n": _list(_int),
    "grid_eps": _list(float),
}


def parse_config(text, source="<config>"):
    """Parse scenario text into a ``ScenarioConfig``; raises ``ConfigError``."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value

    known = set(_PLAIN_REQUIRED) | set(_SCENARIO_KEYS)
    for dbm_key, lin_key, _ in _DUAL.values():
        known |= {dbm_key, lin_key}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")

    sys_values = {}
    for key in _PLAIN_REQUIRED:
        if key not in raw:
            raise ConfigError(f"{source}: missing required key {key!r}")
        sys_values[key] = _convert(key, raw[key], float, source)
    for name, (alt_key, lin_key, to_linear) in _DUAL.items():
        present = [k for k in (alt_key, lin_key) if k in raw]
        if len(present) != 1:
            raise ConfigError(
                f"{source}: exactly one of {alt_key!r} / {lin_key!r} is required")
        value = _convert(present[0], raw[present[0]], float, source)
        sys_values[name] = to_linear(value) if present[0] == alt_key else value
    try:
        params = SystemParams(**sys_values)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    scenario = {key: _convert(key, raw[key], conv, source)
                for key, conv in _SCENARIO_KEYS.items() if key in raw}
    cfg = ScenarioConfig(params=params, **scenario)
    _check_scenario(cfg, source)
    return cfg


def _convert(key, value, conv, source):
    try:
        return conv(value)
    except ValueError as exc:
        raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from None


def _check_scenario(cfg, source):
    problems = []
    if any(k < 1 for k in cfg.k_bits):
        problems.append("k_bits must be positive")
    if any(not 0 < e < 1 for e in cfg.eps_target + cfg.grid_eps):
        problems.append("eps_target/grid_eps must lie in (0, 1)")
    if not 1 <= cfg.n_min <= cfg.n_max:
        problems.append("need 1 <= n_min <= n_max")
    if cfg.n_step < 1 or cfg.n_points < 1:
        problems.append("n_step and n_points must be >= 1")
    if any(d < 2 for d in cfg.delta):
        problems.append("delta values must be >= 2")
    if cfg.mc_samples < 1 or cfg.v_max < 1:
        problems.append("mc_samples and v_max must be >= 1")
    if any(m < 0.5 for m in cfg.grid_m):
        problems.append("grid_m values must be >= 0.5")
    if any(n < 1 for n in cfg.grid_n) or any(k < 1 for k in cfg.grid_k):
        problems.append("grid_n and grid_k must be positive")
    if problems:
        raise ConfigError(f"{source}: " + "; ".join(problems))


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def default_config_text():
    return resources.files("wetfbl").joinpath("scenarios/default.cfg").read_text("utf-8")


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def render_csv(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def write_output(text, path):
    """Write to ``path`` atomically (temp file + rename), or stdout if None."""
    if path is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".wetfbl-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _alloc(v, n, k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ShortBlocklengthWarning)
        return BlockAllocation(v, n, k)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

EVAL_COLUMNS = (
    "m", "k", "n", "v", "rate", "delay", "delay_seconds", "nu", "mu",
    "theta", "beta", "varrho", "vartheta", "zeta2", "xi2",
    "eps_mc", "mc_stderr", "eps_quad_exact", "eps_quad_lin", "eps_closed",
    "eps_asymptotic", "zeta_clamped", "fallback_used", "flags",
)


def cmd_eval(cfg, v, n, k=None, jobs=1):
    """One record with every evaluator at ``(v, n, k)``."""
    k = cfg.k_bits[0] if k is None else k
    p = cfg.params
    alloc = _alloc(v, n, k)
    qp = ev.linearization_params(p, alloc)
    mc = ev.eps_monte_carlo(p, alloc, cfg.mc_samples, cfg.seed, jobs=jobs)
    exact = ev.eps_quadrature(p, alloc, "exact_q")
    lin = ev.eps_quadrature(p, alloc, "linearized")
    closed = ev.eps_closed_form(p, alloc)
    asym = ev.eps_outage_asymptotic(p, alloc)
    flags = sorted(set(mc.flags + exact.flags + closed.flags))
    return {
        "m": p.m, "k": k, "n": n, "v": v,
        "rate": alloc.rate, "delay": alloc.delay,
        "delay_seconds": alloc.delay * p.t_c, "nu": alloc.time_share,
        "mu": qp.mu, "theta": qp.theta, "beta": qp.beta,
        "varrho": qp.varrho, "vartheta": qp.vartheta,
        "zeta2": qp.zeta2, "xi2": qp.xi2,
        "eps_mc": mc.value, "mc_stderr": mc.uncertainty,
        "eps_quad_exact": exact.value, "eps_quad_lin": lin.value,
        "eps_closed": closed.value, "eps_asymptotic": asym.value,
        "zeta_clamped": qp.clamped, "fallback_used": closed.fallback_used,
        "flags": ";".join(flags),
    }


VALIDATE_COLUMNS = (
    "m", "k", "n", "v", "eps_mc", "mc_stderr", "eps_quad_exact", "eps_quad_lin",
    "eps_closed", "log10_ratio_closed_vs_exact", "flags",
)


def validation_points(cfg):
    """(m, k, n, v) grid; ``v`` is the smallest WET blocklength reaching each grid_eps."""
    points = []
    for m in cfg.grid_m:
        params = SystemParams(**{**cfg.params.__dict__, "m": m})
        for k in cfg.grid_k:
            for n in cfg.grid_n:
                vs = []
                for eps0 in cfg.grid_eps:
                    res = min_wet_blocklength(params, k, n, eps0, v_max=cfg.v_max)
                    if res.feasible and res.v_star not in vs:
                        vs.append(res.v_star)
                points += [(m, k, n, v) for v in vs]
    return points


def cmd_validate(cfg, jobs=1):
    """Cross-check all evaluators on the validation grid.

    Returns ``(rows, failures)`` where ``failures`` counts points whose
    closed form departs from the linearized quadrature by more than
    ``IDENTITY_RTOL`` without having fallen back.
    """
    points = validation_points(cfg)
    if not points:
        raise ConfigError("validation grid is empty")
    streams = np.random.SeedSequence(cfg.seed).spawn(len(points))

    def row(i):
        m, k, n, v = points[i]
        params = SystemParams(**{**cfg.params.__dict__, "m": m})
        alloc = _alloc(v, n, k)
        mc = ev.eps_monte_carlo(params, alloc, cfg.mc_samples, streams[i])
        exact = ev.eps_quadrature(params, alloc, "exact_q")
        lin = ev.eps_quadrature(params, alloc, "linearized")
        closed = ev.eps_closed_form(params, alloc)
        flags = set(closed.flags + exact.flags)
        identity_ok = closed.fallback_used or (
            abs(closed.value - lin.value) <= IDENTITY_RTOL * abs(lin.value))
        if closed.fallback_used:
            flags.add("fallback")
        if not identity_ok:
            flags.add("identity_failed")
        ratio = (math.log10(closed.value / exact.value)
                 if closed.value > 0 and exact.value > 0 else math.nan)
        return {
            "m": m, "k": k, "n": n, "v": v,
            "eps_mc": mc.value, "mc_stderr": mc.uncertainty,
            "eps_quad_exact": exact.value, "eps_quad_lin": lin.value,
            "eps_closed": closed.value, "log10_ratio_closed_vs_exact": ratio,
            "flags": ";".join(sorted(flags)),
        }

    rows = _map(row, list(range(len(points))), jobs)
    failures = sum("identity_failed" in r["flags"] for r in rows)
    return rows, failures


SWEEP_COLUMNS = {
    "delay_vs_n": ("eps_target", "k", "n", "v_star", "delta", "delta_seconds",
                   "nu", "eps_achieved", "feasible"),
    "min_delay_vs_k": ("eps_target", "k", "n_star", "v_star", "delta_star",
                       "delta_seconds", "nu", "eps_achieved", "eps_certified",
                       "feasible"),
    "eps_vs_delta": ("k", "delta", "delta_seconds", "n_star", "v_star", "eps_star"),
    "fixed_power_vs_delta": ("k", "delta", "delta_seconds", "n_star", "v_star",
                             "p_hat_star", "eps_star"),
}


def sweep_n_grid(cfg):
    """WIT blocklengths for ``delay_vs_n``: ``n_points`` geometric points on [n_min, n_max]."""
    if cfg.n_points == 1:
        return [cfg.n_min]
    ns = np.unique(np.round(np.geomspace(cfg.n_min, cfg.n_max, cfg.n_points)).astype(int))
    return [int(n) for n in ns]


def cmd_sweep(cfg, mode, jobs=1):
    """Rows of one sweep and whether every optimum was feasible."""
    p = cfg.params
    rows = []
    if mode == "delay_vs_n":
        ns = sweep_n_grid(cfg)
        for eps0 in cfg.eps_target:
            for k in cfg.k_bits:
                for r in delay_profile(p, k, eps0, ns, v_max=cfg.v_max, jobs=jobs):
                    rows.append({
                        "eps_target": eps0, "k": k, "n": r.n_star, "v_star": r.v_star,
                        "delta": r.delta_star, "delta_seconds": r.delta_seconds,
                        "nu": r.nu, "eps_achieved": r.eps_achieved, "feasible": r.feasible,
                    })
        return rows, True
    if mode == "min_delay_vs_k":
        ok = True
        for eps0 in cfg.eps_target:
            for k in cfg.k_bits:
                r = min_delay(p, k, eps0, cfg.n_min, cfg.n_max, cfg.n_step,
                              v_max=cfg.v_max, jobs=jobs)
                ok = ok and r.feasible
                rows.append({
                    "eps_target": eps0, "k": k, "n_star": r.n_star, "v_star": r.v_star,
                    "delta_star": r.delta_star, "delta_seconds": r.delta_seconds,
                    "nu": r.nu, "eps_achieved": r.eps_achieved,
                    "eps_certified": r.eps_certified, "feasible": r.feasible,
                })
        return rows, ok
    if mode == "eps_vs_delta":
        for k in cfg.k_bits:
            for delta in cfg.delta:
                eps, n = min_error_given_delay(p, k, delta, cfg.n_min, cfg.n_step, jobs=jobs)
                rows.append({"k": k, "delta": delta, "delta_seconds": delta * p.t_c,
                             "n_star": n, "v_star": delta - n, "eps_star": eps})
        return rows, True
    if mode == "fixed_power_vs_delta":
        for k in cfg.k_bits:
            for delta in cfg.delta:
                p_hat, eps, n = best_fixed_power(p, k, delta, cfg.n_min, jobs=jobs)
                rows.append({"k": k, "delta": delta, "delta_seconds": delta * p.t_c,
                             "n_star": n, "v_star": delta - n, "p_hat_star": p_hat,
                             "eps_star": eps})
        return rows, True
    raise ConfigError(f"unknown sweep mode {mode!r}; choose from {', '.join(SWEEP_MODES)}")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="wetfbl", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (default: bundled scenario)")
    common.add_argument("--out", help="output CSV path (default: config 'output' or stdout)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker threads (default: CPU count)")
    common.add_argument("--seed", type=int, help="override the config seed")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_eval = sub.add_parser("eval", parents=[common], help="evaluate one (v, n, k) point")
    p_eval.add_argument("--v", type=int, required=True, help="WET channel uses")
    p_eval.add_argument("--n", type=int, required=True, help="WIT channel uses")
    p_eval.add_argument("--k", type=int, help="message bits (default: first k_bits)")

    sub.add_parser("validate", parents=[common], help="cross-validate the evaluators")

    p_sweep = sub.add_parser("sweep", parents=[common], help="run a parameter sweep")
    p_sweep.add_argument("--mode", required=True, choices=SWEEP_MODES)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config)
        else:
            cfg = parse_config(default_config_text(), "<bundled default.cfg>")
        if args.seed is not None:
            cfg.seed = args.seed
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = args.out or cfg.output

        if args.command == "eval":
            if args.v < 1 or args.n < 1 or (args.k is not None and args.k < 1):
                raise ConfigError("--v, --n and --k must be positive")
            record = cmd_eval(cfg, args.v, args.n, args.k, jobs=args.jobs)
            write_output(render_csv(EVAL_COLUMNS, [record]), out)
            return EXIT_OK
        if args.command == "validate":
            rows, failures = cmd_validate(cfg, jobs=args.jobs)
            write_output(render_csv(VALIDATE_COLUMNS, rows), out)
            if failures:
                print(f"wetfbl: {failures} closed-form identity check(s) failed",
                      file=sys.stderr)
                return EXIT_FAIL
            return EXIT_OK
        rows, ok = cmd_sweep(cfg, args.mode, jobs=args.jobs)
        write_output(render_csv(SWEEP_COLUMNS[args.mode], rows), out)
        if not ok:
            print("wetfbl: reliability target infeasible for some sweep points",
                  file=sys.stderr)
            return EXIT_FAIL
        return EXIT_OK
    except ConfigError as exc:
        print(f"wetfbl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"wetfbl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

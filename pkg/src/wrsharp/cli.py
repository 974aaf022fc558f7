"""Experiment driver: ``wrsharp run <config>`` and ``wrsharp describe <experiment>``.

Configs are flat ``key = value`` files (``[section]`` headers only group
keys) or JSON.  Work is cut into fixed chunks, each with its own random
stream derived from the master seed, so results do not depend on the number
of worker processes.  Each run writes ``<name>.csv`` and ``<name>.json``
(deterministic) plus ``<name>.run.json`` (wall time, workers).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coupling import CouplingError, disagreement_coupling, monotone_coupling, uniqueness_diagnostic
from .geometry import Window, unit_ball_volume
from .model import BoundaryCondition, FREE, ModelParams
from .multicolor import WINDOW_CLIPPED, fk_color, sample_crcm_chain, thinned_measure_experiment
from .osss import CubeGrid, check_derivative_covariance, check_osss, estimate_revealment, sample_wired
from .percolation import ThresholdError, estimate_theta, estimate_threshold, fit_decay, theta_table
from .rng import stream
from .samplers import SamplerError, sample_by_thinning, sample_mcmc_chain, sample_rejection_many, marked_tuple

EXIT_OK, EXIT_CONFIG, EXIT_SAMPLER, EXIT_ASSERTION = 0, 2, 3, 4

#: Keys that never change results and are left out of the config hash.
VOLATILE_KEYS = ("out_dir", "threads")

CHUNK = 100


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config parsing


@dataclass
class Config:
    values: dict
    lines: dict = field(default_factory=dict)
    source: str = "<config>"

    def where(self, key: str) -> str:
        line = self.lines.get(key)
        return f"{self.source}:{line}" if line else self.source

    def fail(self, key: str, message: str):
        raise ConfigError(f"{self.where(key)}: {key}: {message}")

    def get(self, key, default=None):
        return self.values.get(key, default)

    def number(self, key, default=None, low=None, high=None, strict_low=False, integer=False):
        v = self.values.get(key, default)
        if v is None:
            self.fail(key, "missing value")
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(key, f"expected a number, got {v!r}")
        if integer and (not float(v).is_integer()):
            self.fail(key, f"expected an integer, got {v!r}")
        if not math.isfinite(v):
            self.fail(key, "must be finite")
        if low is not None and (v <= low if strict_low else v < low):
            self.fail(key, f"must be {'>' if strict_low else '>='} {low}")
        if high is not None and v > high:
            self.fail(key, f"must be <= {high}")
        return int(v) if integer else float(v)

    def numbers(self, key, default=None, increasing=False, **kw):
        v = self.values.get(key, default)
        if v is None:
            self.fail(key, "missing value")
        if not isinstance(v, list):
            v = [v]
        if not v:
            self.fail(key, "empty list")
        out = []
        for item in v:
            self.values["__item__"] = item
            self.lines["__item__"] = self.lines.get(key)
            try:
                out.append(self.number("__item__", **kw))
            except ConfigError as exc:
                raise ConfigError(str(exc).replace("__item__", key)) from None
        self.values.pop("__item__", None)
        if increasing and any(b <= a for a, b in zip(out, out[1:])):
            self.fail(key, "must be strictly increasing")
        return out

    def choice(self, key, options, default=None):
        v = self.values.get(key, default)
        if v not in options:
            self.fail(key, f"expected one of {', '.join(options)}, got {v!r}")
        return v


def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except ValueError:
        pass
    if "," in text:
        return [_parse_value(t) for t in text.split(",") if t.strip()]
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    return text


def parse_config_text(text: str, source: str = "<config>") -> Config:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except ValueError as exc:
            raise ConfigError(f"{source}: invalid JSON: {exc}") from None
        if isinstance(data.get("config"), dict):
            data = data["config"]
        values, lines = {}, {}
        raw = text.splitlines()
        for key, v in _flatten(data):
            values[key] = v
            needle = f'"{key}"'
            lines[key] = next((i + 1 for i, l in enumerate(raw) if needle in l), None)
        return Config(values, lines, source)
    values, lines = {}, {}
    for i, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].split(";", 1)[0].strip()
        if not s or (s.startswith("[") and s.endswith("]")):
            continue
        if "=" not in s:
            raise ConfigError(f"{source}:{i}: expected 'key = value', got {line.strip()!r}")
        key, value = (p.strip() for p in s.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{i}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{i}: {key}: duplicate key (first on line {lines[key]})")
        values[key] = _parse_value(value)
        lines[key] = i
    return Config(values, lines, source)


def _flatten(data: dict):
    for key, v in data.items():
        if isinstance(v, dict):
            yield from _flatten(v)
        else:
            yield key, v


def load_config(path: str) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def canonical(values: dict) -> dict:
    return {k: values[k] for k in sorted(values) if k not in VOLATILE_KEYS}


def config_hash(values: dict) -> str:
    blob = json.dumps(canonical(values), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# experiments


@dataclass
class Result:
    columns: list
    rows: list
    summary: dict
    checks: dict


def _params(cfg: Config, z_key="z", z_default=None) -> ModelParams:
    d = cfg.number("d", 2, integer=True, low=1, high=3)
    return ModelParams(
        z=cfg.number(z_key, z_default, low=0, strict_low=True),
        beta=cfg.number("beta", 0.0, low=0),
        d=d,
        r=cfg.number("r", 0.5, low=0, strict_low=True),
    )


def _gen(seed, tag, index):
    return stream(seed, tag, index)


def _chunks(total, size=CHUNK):
    return [(i, min(size, total - i * size)) for i in range(math.ceil(total / size))]


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0


# sample ---------------------------------------------------------------


def _task_sample(params, n, bc_kind, method, count, max_attempts, seed, index):
    rng = _gen(seed, "sample", index)
    window = Window.box(n, params.d)
    bc = BoundaryCondition.wired() if bc_kind == "wired" else FREE
    if method == "rejection":
        cfgs = sample_rejection_many(window, bc, params, count, rng, max_attempts)
    elif method == "mcmc":
        cfgs = sample_mcmc_chain(window, bc, params, count, rng)
    elif method == "thinning":
        cfgs = [sample_by_thinning(window, bc, params, [window], marked_tuple(window, params.z, 1, rng))
                for _ in range(count)]
    else:
        k = rng.poisson(params.z * window.volume, size=count)
        return [int(v) for v in k]
    return [len(c) for c in cfgs]


def _exp_sample(cfg, seed, pool):
    params = _params(cfg, z_default=1.0)
    n = cfg.number("n", 1.0, low=0, strict_low=True)
    bc = cfg.choice("bc", ("free", "wired"), "free")
    method = cfg.choice("method", ("rejection", "mcmc", "poisson", "thinning"), "rejection")
    reps = cfg.number("replicates", 1000, low=1, integer=True)
    max_attempts = cfg.number("max_attempts", 10**6, low=1, integer=True)
    if method == "poisson" and params.beta != 0:
        cfg.fail("method", "poisson needs beta = 0")
    tasks = [(_task_sample, params, n, bc, method, c, max_attempts, seed, i) for i, c in _chunks(reps)]
    counts = [k for part in pool(tasks) for k in part]
    vol = Window.box(n, params.d).volume
    mean, se = _mean_se(counts)
    var = float(np.var(counts, ddof=1)) if len(counts) > 1 else 0.0
    lower = params.z * math.exp(-params.beta * unit_ball_volume(params.d)) * vol
    upper = params.z * vol
    q = 2.5758
    rows = [[i, k] for i, k in enumerate(counts)]
    summary = {"mean_count": mean, "mean_stderr": se, "variance": var,
               "fano": var / mean if mean > 0 else float("nan"),
               "poisson_lower_mean": lower, "poisson_upper_mean": upper}
    checks = {"sandwich": bool(lower - q * se <= mean <= upper + q * se)}
    return Result(["replicate", "count"], rows, summary, checks)


# theta ------------------------------------------------------------------


def _task_theta_table(ns, zs, r, d, count, seed, index):
    return theta_table(ns, zs, r, count, _gen(seed, "theta", index), d)


def _task_theta(n, params, count, seed, index):
    est = estimate_theta(n, params, count, _gen(seed, "theta", index))
    return est.theta, est.stderr


def _theta_grid(cfg, seed, pool, zs):
    params = _params(cfg, z_default=zs[0])
    ns = [int(v) for v in cfg.numbers("ns", list(range(1, 7)), increasing=True, low=0, integer=True)]
    reps = cfg.number("replicates", 2000, low=1, integer=True)
    theta = np.zeros((len(zs), len(ns)))
    se = np.zeros_like(theta)
    if params.beta == 0:
        parts = pool([(_task_theta_table, ns, zs, params.r, params.d, c, seed, i)
                      for i, c in _chunks(reps, 500)])
        table = np.concatenate(parts, axis=0)
        theta = table.mean(axis=0)
        se = np.sqrt(theta * (1 - theta) / reps)
    else:
        tasks = []
        for a, z in enumerate(zs):
            for b, n in enumerate(ns):
                tasks.append((_task_theta, n, params.with_(z=z), reps, seed, a * len(ns) + b))
        out = pool(tasks)
        for k, (t, s) in enumerate(out):
            theta[k // len(ns), k % len(ns)] = t
            se[k // len(ns), k % len(ns)] = s
    return params, ns, theta, se


def _exp_theta_sweep(cfg, seed, pool):
    zs = cfg.numbers("zs", [cfg.get("z", 0.5)], increasing=True, low=0, strict_low=True)
    params, ns, theta, se = _theta_grid(cfg, seed, pool, zs)
    q = 2.5758
    rows = []
    dec_all = True
    for a, z in enumerate(zs):
        for b, n in enumerate(ns):
            ok = True
            if b > 0:
                ok = bool(theta[a, b] <= theta[a, b - 1] + q * math.hypot(se[a, b], se[a, b - 1]))
            dec_all &= ok
            rows.append([z, n, theta[a, b], se[a, b], max(0.0, theta[a, b] - q * se[a, b]),
                         min(1.0, theta[a, b] + q * se[a, b]), ok])
    inc = bool(np.all(np.diff(theta, axis=0) >= -q * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)))
    checks = {"decreasing_in_n": bool(dec_all), "increasing_in_z": inc}
    return Result(["z", "n", "theta", "stderr", "ci_low", "ci_high", "decreasing_ok"], rows, {}, checks)


def _exp_decay_fit(cfg, seed, pool):
    z = cfg.number("z", 0.5, low=0, strict_low=True)
    params, ns, theta, se = _theta_grid(cfg, seed, pool, [z])
    rows = [[n, theta[0, b], se[0, b]] for b, n in enumerate(ns)]
    pos = [n for n, t in zip(ns, theta[0]) if n > 0 and t > 0]
    if len(pos) < 4:
        return Result(["n", "theta", "stderr"], rows, {"error": "fewer than 4 positive estimates"},
                      {"alpha1_positive": False, "r_squared": False})
    keep = [b for b, n in enumerate(ns) if n > 0]
    fit = fit_decay([ns[b] for b in keep], theta[0, keep], se[0, keep])
    lo, hi = fit.ci(0.95)
    min_r2 = cfg.number("min_r_squared", 0.95, low=0, high=1)
    summary = {"alpha1": fit.alpha1, "alpha1_stderr": fit.alpha1_stderr, "alpha1_ci_low": lo,
               "alpha1_ci_high": hi, "intercept": fit.intercept, "r_squared": fit.r_squared}
    checks = {"alpha1_positive": bool(lo > 0), "r_squared": bool(fit.r_squared >= min_r2)}
    return Result(["n", "theta", "stderr"], rows, summary, checks)


# threshold ----------------------------------------------------------------


def _task_threshold(params, sizes, reps, z_range, seed):
    return estimate_threshold(params, sizes, reps, _gen(seed, "threshold", 0), z_range=z_range)


def _exp_threshold(cfg, seed, pool):
    params = _params(cfg, z_default=1.0)
    sizes = cfg.numbers("box_sizes", [8, 16], increasing=True, low=0, strict_low=True)
    if len(sizes) < 2:
        cfg.fail("box_sizes", "need at least two box sizes")
    reps = cfg.number("replicates", 500, low=1, integer=True)
    z_range = (cfg.number("z_min", 0.05, low=0, strict_low=True), cfg.number("z_max", 20.0, low=0, strict_low=True))
    if z_range[1] <= z_range[0]:
        cfg.fail("z_max", "must exceed z_min")
    (est,) = pool([(_task_threshold, params, sizes, reps, z_range, seed)])
    rows = [[s, z] for s, z in zip(est.box_sizes, est.per_box)]
    summary = {"z_hat": est.z_hat, "ci_low": est.ci_low, "ci_high": est.ci_high,
               "stderr": est.stderr, "method": est.method}
    checks = {"ci_contains_estimate": bool(est.ci_low <= est.z_hat <= est.ci_high)}
    return Result(["box", "z_hat"], rows, summary, checks)


# osss -------------------------------------------------------------------


def _task_wired(n, params, count, seed, index):
    return sample_wired(n, params, count, _gen(seed, "osss", index))


def _exp_osss(cfg, seed, pool):
    params = _params(cfg, z_default=1.0)
    n = cfg.number("n", 3, low=0, integer=True)
    ss = [int(v) for v in cfg.numbers("s", [1, 2], low=0, integer=True)]
    if any(s > n for s in ss):
        cfg.fail("s", "every s must satisfy s <= n")
    per_side = cfg.number("per_side", 32, low=1, integer=True)
    reps = cfg.number("replicates", 500, low=2, integer=True)
    grid = CubeGrid.for_box(n + params.r + 1, per_side, params.d)
    parts = pool([(_task_wired, n, params, c, seed, i) for i, c in _chunks(reps, 50)])
    samples = [s for part in parts for s in part]
    rows = []
    checks = {"osss": True, "fkg": True, "revealment_bound": True}
    for s in ss:
        rep = check_osss(grid, s, n, params, reps, samples=samples)
        rv = estimate_revealment(grid, s, n, params, reps, samples=samples)
        rows.append([s, rep.var_f, rep.rhs, rep.slack, rep.stderr, rep.discretization, rep.holds,
                     rep.fkg_violations_3sigma, rep.fkg_violations, rep.fkg_threshold,
                     float(rv.taus.mean()), rv.bound_holds()])
        checks["osss"] &= rep.holds
        checks["fkg"] &= rep.fkg_violations == 0
        checks["revealment_bound"] &= rv.bound_holds()
    cols = ["s", "var_f", "rhs", "slack", "stderr", "discretization", "holds", "fkg_violations_3sigma",
            "fkg_violations", "fkg_threshold", "mean_tau", "revealment_bound"]
    return Result(cols, rows, {"epsilon": grid.epsilon, "cubes": grid.t}, checks)


def _task_derivative(n, params, h, reps, seed):
    return check_derivative_covariance(n, params, h=h, replicates=reps, rng=_gen(seed, "derivative", 0))


def _exp_derivative(cfg, seed, pool):
    params = _params(cfg, z_default=1.0)
    n = cfg.number("n", 2, low=0, strict_low=True)
    h = cfg.number("h", 0.05, low=0, strict_low=True)
    if h >= params.z:
        cfg.fail("h", "must be smaller than z")
    reps = cfg.number("replicates", 10000, low=2, integer=True)
    (rep,) = pool([(_task_derivative, n, params, h, reps, seed)])
    row = [rep.derivative, rep.derivative_stderr, rep.covariance, rep.covariance_stderr,
           rep.difference, rep.stderr]
    cols = ["derivative", "derivative_stderr", "covariance", "covariance_stderr", "difference", "stderr"]
    return Result(cols, [row], {"relative_discrepancy": rep.relative_discrepancy},
                  {"agree_3sigma": rep.agrees(3.0)})


# couplings ----------------------------------------------------------------


def _task_coupling(mode, window, b1, b2, params, indices, seed):
    bc1 = BoundaryCondition.explicit(b1, window.d) if len(b1) else FREE
    bc2 = BoundaryCondition.explicit(b2, window.d) if len(b2) else FREE
    out = []
    for i in indices:
        g = _gen(seed, "coupling", i)
        run = disagreement_coupling if mode == "disagreement" else monotone_coupling
        pair = run(window, bc1, bc2, params, g)
        out.append((len(pair.xi1), len(pair.xi2), len(pair.disagreement), len(pair.rounds),
                    pair.nested(), pair.disagreement_connected() if mode == "disagreement" else True))
    return out


def _window_from(cfg, d):
    lower = cfg.numbers("lower", [0.0] * d)
    upper = cfg.numbers("upper", [2.0] * d)
    if len(lower) != d or len(upper) != d:
        cfg.fail("lower", f"lower and upper need {d} coordinates")
    if any(b <= a for a, b in zip(lower, upper)):
        cfg.fail("upper", "upper must exceed lower in every coordinate")
    return Window(tuple(lower), tuple(upper))


def _exp_coupling(cfg, seed, pool):
    params = _params(cfg, z_default=1.0)
    d = params.d
    window = _window_from(cfg, d)
    mode = cfg.choice("mode", ("disagreement", "monotone"), "disagreement")
    flat = cfg.numbers("boundary", [-0.5, 0.5, -0.5, 1.5, 2.5, 1.0, 1.0, -0.6])
    if len(flat) % d:
        cfg.fail("boundary", f"needs a multiple of {d} coordinates")
    b2 = np.array(flat, dtype=float).reshape(-1, d)
    if np.any(window.contains(b2)):
        cfg.fail("boundary", "boundary points must lie outside the window")
    k = cfg.number("boundary1_count", len(b2) // 2, low=0, high=len(b2), integer=True)
    b1 = b2[:k]
    reps = cfg.number("replicates", 200, low=1, integer=True)
    tasks = [(_task_coupling, mode, window, b1, b2, params, list(range(i * CHUNK, i * CHUNK + c)), seed)
             for i, c in _chunks(reps)]
    res = [r for part in pool(tasks) for r in part]
    rows = [[i, *r[:4]] for i, r in enumerate(res)]
    checks = {"nested": all(r[4] for r in res), "disagreement_connected": all(r[5] for r in res)}
    ref_n = cfg.number("reference_samples", 0, low=0, integer=True)
    summary = {"mean_n1": float(np.mean([r[0] for r in res])), "mean_n2": float(np.mean([r[1] for r in res])),
               "disagreement_fraction": float(np.mean([r[2] > 0 for r in res]))}
    if ref_n:
        tol = cfg.number("tv_tolerance", 0.03, low=0)
        for side, b in ((1, b1), (2, b2)):
            bc = BoundaryCondition.explicit(b, d) if len(b) else FREE
            ref = sample_rejection_many(window, bc, params, ref_n, _gen(seed, f"reference{side}", 0))
            tv = _tv([len(c) for c in ref], [r[side - 1] for r in res])
            summary[f"tv_{side}"] = tv
            checks[f"marginal_{side}"] = bool(tv <= tol)
    return Result(["replicate", "n1", "n2", "disagreement", "rounds"], rows, summary, checks)


def _tv(a, b) -> float:
    m = max(max(a, default=0), max(b, default=0)) + 1
    pa = np.bincount(a, minlength=m) / max(len(a), 1)
    pb = np.bincount(b, minlength=m) / max(len(b), 1)
    return float(0.5 * np.abs(pa - pb).sum())


def _task_uniqueness(n, params, reps, inner, method, seed, index):
    curve = uniqueness_diagnostic([n], params, reps, _gen(seed, "uniqueness", index), inner, method)
    return float(curve.probability[0]), float(curve.stderr[0])


def _exp_uniqueness(cfg, seed, pool):
    params = _params(cfg, z_default=0.05)
    inner = cfg.number("inner", 1.0, low=0, strict_low=True)
    ns = cfg.numbers("ns", [2, 3, 4, 5], increasing=True, low=inner, strict_low=True)
    method = cfg.choice("method", ("bound", "coupling"), "bound")
    reps = cfg.number("replicates", 500, low=1, integer=True)
    out = pool([(_task_uniqueness, n, params, reps, inner, method, seed, i) for i, n in enumerate(ns)])
    rows = [[n, p, s] for n, (p, s) in zip(ns, out)]
    q = 2.5758
    dec = all(b[0] <= a[0] + q * math.hypot(a[1], b[1]) for a, b in zip(out, out[1:]))
    summary = {}
    probs = [p for p, _ in out]
    if sum(p > 0 for p in probs) >= 4:
        fit = fit_decay(ns, probs, [s for _, s in out])
        summary = {"slope": -fit.alpha1, "slope_stderr": fit.alpha1_stderr, "r_squared": fit.r_squared}
    return Result(["n", "probability", "stderr"], rows, summary, {"non_increasing": bool(dec)})


# multicolor -------------------------------------------------------------


def _task_fk(window, z, count, seed, index):
    run = sample_crcm_chain(window, z, count, _gen(seed, "fk", index))
    g = _gen(seed, "fk-color", index)
    out = []
    for st in run.states:
        pair = fk_color(st, g)
        out.append((len(pair.omega1), pair.is_valid(), st.bounds_hold()))
    return out, run.mismatches


def _task_fk_reference(window, z, count, seed):
    ref = sample_rejection_many(window, WINDOW_CLIPPED, ModelParams(z, z, window.d), count,
                                _gen(seed, "fk-reference", 0))
    return [len(c) for c in ref]


def _exp_fk(cfg, seed, pool):
    d = cfg.number("d", 2, integer=True, low=1, high=3)
    z = cfg.number("z", 1.0, low=0, strict_low=True)
    side = cfg.number("side", 2.0, low=0, strict_low=True)
    window = Window((0.0,) * d, (side,) * d)
    samples = cfg.number("samples", 5000, low=1, integer=True)
    ref_n = cfg.number("reference_samples", 20000, low=1, integer=True)
    tol = cfg.number("tv_tolerance", 0.05, low=0)
    tasks = [(_task_fk, window, z, c, seed, i) for i, c in _chunks(samples, 1000)]
    tasks.append((_task_fk_reference, window, z, ref_n, seed))
    out = pool(tasks)
    ref = out[-1]
    fk = [r for part, _ in out[:-1] for r in part]
    mism = sum(m for _, m in out[:-1])
    counts = [r[0] for r in fk]
    m = max(max(counts), max(ref)) + 1
    pf = np.bincount(counts, minlength=m) / len(counts)
    pr = np.bincount(ref, minlength=m) / len(ref)
    tv = float(0.5 * np.abs(pf - pr).sum())
    rows = [[k, pf[k], pr[k]] for k in range(m)]
    checks = {"valid": all(r[1] for r in fk), "component_bounds": all(r[2] for r in fk),
              "incremental_counts": mism == 0, "first_marginal_tv": bool(tv <= tol)}
    return Result(["count", "fk_frequency", "reference_frequency"], rows, {"tv": tv}, checks)


def _task_thin(window, z, r, sweeps, reps, seed, index):
    (row,) = thinned_measure_experiment(window, [z], r, sweeps, reps, _gen(seed, "thin", index))
    return row


def _exp_thin(cfg, seed, pool):
    d = cfg.number("d", 2, integer=True, low=1, high=3)
    zs = cfg.numbers("zs", [0.5, 2.0], increasing=True, low=0, strict_low=True)
    r = cfg.number("r", 0.75, low=0.5, strict_low=True)
    side = cfg.number("side", 6.0, low=0, strict_low=True)
    sweeps = cfg.number("sweeps", 50, low=0, strict_low=True)
    reps = cfg.number("replicates", 200, low=1, integer=True)
    window = Window((0.0,) * d, (side,) * d)
    out = pool([(_task_thin, window, z, r, sweeps, reps, seed, i) for i, z in enumerate(zs)])
    rows = [[o.z, o.raw_crossing, o.thinned_crossing, o.raw_stderr, o.thinned_stderr, o.removed_fraction]
            for o in out]
    checks = {"thinned_below_raw": all(o.thinned_crossing <= o.raw_crossing for o in out)}
    cols = ["z", "raw_crossing", "thinned_crossing", "raw_stderr", "thinned_stderr", "removed_fraction"]
    return Result(cols, rows, {}, checks)


@dataclass(frozen=True)
class Experiment:
    run: object
    about: str
    parameters: str
    columns: str


EXPERIMENTS = {
    "sample": Experiment(
        _exp_sample,
        "Point counts of the area-interaction model on the box Λ_n, with the check that the\n"
        "mean lies between the Poisson(z e^{-beta v_d}) and Poisson(z) means.",
        "z, beta, d, n (box half-side), bc (free|wired), method (rejection|mcmc|poisson|thinning), replicates,\n"
        "max_attempts (rejection proposals per draw)",
        "replicate, count",
    ),
    "theta-sweep": Experiment(
        _exp_theta_sweep,
        "Connection probabilities θ_n(z) = μ(0 ↔_r ∂Λ_n) under the wired measure on Λ_{3n+2}\n"
        "(the Poisson(z) process when beta = 0, paired across z and n).",
        "zs (strictly increasing), ns, r, beta, d, replicates",
        "z, n, theta, stderr, ci_low, ci_high, decreasing_ok",
    ),
    "decay-fit": Experiment(
        _exp_decay_fit,
        "Weighted least-squares fit of ln θ_n against n at one activity; reports alpha1 = -slope.",
        "z, ns, r, beta, d, replicates, min_r_squared",
        "n, theta, stderr",
    ),
    "threshold": Experiment(
        _exp_threshold,
        "Activity at which the left-right crossing probability of Λ_n is 1/2, at the largest box,\n"
        "with an interval from the spread across box sizes.",
        "box_sizes, r, beta, d, replicates, z_min, z_max",
        "box, z_hat",
    ),
    "osss-check": Experiment(
        _exp_osss,
        "OSSS inequality Var(f) <= 2 Σ_e δ(e, T_s) Cov(f, #ω_e) for f = 1{0 ↔_r ∂Λ_n}, with the\n"
        "exploration T_s over ε-cubes (ε = side / per_side of the grid on Λ_{n+r+1}), the FKG sign\n"
        "of every covariance and the revealment bound, under the wired measure on Λ_{3n+2}.",
        "n, s (list, each <= n), per_side (ε = 2(n + r + 1) / per_side), z, beta, r, d, replicates",
        "s, var_f, rhs, slack, stderr, discretization, holds, fkg_violations_3sigma, fkg_violations,\n"
        "fkg_threshold, mean_tau, revealment_bound",
    ),
    "derivative-check": Experiment(
        _exp_derivative,
        "d/dz E_z f = Cov_z(f, #ω) / z for f = 1{0 ↔_r ∂Λ_n} under the wired measure on Λ_n:\n"
        "central finite difference at z ± h against the covariance at z.",
        "n, z, h, beta, r, d, replicates",
        "derivative, derivative_stderr, covariance, covariance_stderr, difference, stderr",
    ),
    "coupling-check": Experiment(
        _exp_coupling,
        "Monotone or disagreement coupling of two nested explicit boundaries on a window; checks\n"
        "xi1 ⊆ xi2 and that every disagreement point is 1-connected to the boundary through xi2.",
        "mode (disagreement|monotone), lower, upper, boundary (flat coordinates), boundary1_count,\n"
        "z, beta, d, replicates, reference_samples, tv_tolerance",
        "replicate, n1, n2, disagreement, rounds",
    ),
    "disagreement-uniqueness": Experiment(
        _exp_uniqueness,
        "Probability that the influence of a saturated shell outside Λ_n reaches the inner box,\n"
        "as n grows (method bound: 1-connection through the larger configuration; method\n"
        "coupling: a disagreement point of the disagreement coupling).",
        "ns, inner, method (bound|coupling), z, beta, d, replicates",
        "n, probability, stderr",
    ),
    "fk-check": Experiment(
        _exp_fk,
        "Random-cluster chain with weight z^n 2^{N_cc}, clusters colored at random; the first color\n"
        "is compared with the area model at (z, beta = z) clipped to the window.",
        "z, side, d, samples, reference_samples, tv_tolerance",
        "count, fk_frequency, reference_frequency",
    ),
    "thin-experiment": Experiment(
        _exp_thin,
        "Crossing of the window by r-balls for random-cluster samples, before and after removing\n"
        "the radius-1/2 clusters that touch the window's surface.",
        "zs, r (> 1/2), side, sweeps, d, replicates",
        "z, raw_crossing, thinned_crossing, raw_stderr, thinned_stderr, removed_fraction",
    ),
}


def describe(name: str) -> str:
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; known: {', '.join(EXPERIMENTS)}")
    e = EXPERIMENTS[name]
    return f"{name}\n\n{e.about}\n\nparameters: {e.parameters}\ncolumns: {e.columns}\n"


# ---------------------------------------------------------------------------
# execution


def _call(task):
    fn, *args = task
    return fn(*args)


def _pool(threads: int):
    if threads <= 1:
        return lambda tasks: [_call(t) for t in tasks]

    def run(tasks):
        if len(tasks) <= 1:
            return [_call(t) for t in tasks]
        with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as ex:
            return list(ex.map(_call, tasks))
    return run


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    return v


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("WRSHARP_THREADS", "1")))
    except ValueError:
        return 1


def run_config(cfg: Config, seed=None, threads=None, out_dir=None) -> tuple:
    """Execute a parsed config; returns ``(exit code, paths, record)``."""
    name = cfg.get("experiment")
    if name not in EXPERIMENTS:
        cfg.fail("experiment", f"unknown experiment {name!r}; known: {', '.join(EXPERIMENTS)}")
    if seed is not None:
        cfg.values["seed"] = int(seed)
    seed = cfg.number("seed", 0, low=0, integer=True)
    cfg.values["seed"] = seed
    label = str(cfg.get("name", name))
    if not label or any(c in label for c in "/\\"):
        cfg.fail("name", "must be a plain file name")
    threads = threads if threads is not None else cfg.get("threads", default_threads())
    out = Path(out_dir if out_dir is not None else cfg.get("out_dir", "."))
    t0 = time.perf_counter()
    code = EXIT_OK
    error = None
    try:
        result = EXPERIMENTS[name].run(cfg, seed, _pool(int(threads)))
    except (SamplerError, ThresholdError) as exc:
        code, error = EXIT_SAMPLER, f"{type(exc).__name__}: {exc}"
        result = Result([], [], {}, {})
    except (CouplingError, AssertionError) as exc:
        code, error = EXIT_ASSERTION, f"{type(exc).__name__}: {exc}"
        result = Result([], [], {}, {})
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{cfg.source}: {exc}") from None
    if code == EXIT_OK and not all(result.checks.values()):
        code = EXIT_ASSERTION
    chash = config_hash(cfg.values)
    record = {
        "experiment": name,
        "config_hash": chash,
        "seed": seed,
        "version": __version__,
        "config": canonical(cfg.values),
        "summary": _jsonable(result.summary),
        "checks": _jsonable(result.checks),
        "passed": code == EXIT_OK,
        "error": error,
    }
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{label}.csv"
    lines = [f"# experiment={name} config_hash={chash} seed={seed} version={__version__}",
             ",".join(result.columns)]
    lines += [",".join(_fmt(v) for v in row) for row in result.rows]
    csv_path.write_text("\n".join(lines) + "\n")
    json_path = out / f"{label}.json"
    json_path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    meta = {"wall_time": time.perf_counter() - t0, "threads": int(threads),
            "python": sys.version.split()[0], "exit_code": code}
    (out / f"{label}.run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return code, (csv_path, json_path), record


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wrsharp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--threads", type=int, help="worker processes (default: $WRSHARP_THREADS or 1)")
    p_run.add_argument("--out-dir")
    p_desc = sub.add_parser("describe", help="describe an experiment")
    p_desc.add_argument("experiment")
    args = parser.parse_args(argv)
    try:
        if args.command == "describe":
            print(describe(args.experiment), end="")
            return EXIT_OK
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        code, paths, record = run_config(cfg, args.seed, args.threads, args.out_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = "passed" if code == EXIT_OK else ("failed: " + (record["error"] or ", ".join(
        k for k, v in record["checks"].items() if not v)))
    print(f"{record['experiment']}: {status}; wrote {paths[0]} and {paths[1]}")
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Decision trees over small cubes, revealment and the OSSS inequality.

The target function is ``f = 1{0 ↔_r ∂Λ_n}``.  The exploration ``T_s``
reveals the cubes of a grid one at a time, growing the r-clusters that meet
``∂Λ_s`` from that surface, and stops once ``f`` is decided.  Since every
path from the origin to ``∂Λ_n`` crosses ``∂Λ_s`` for ``s <= n``, the
explored clusters always decide ``f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _explore
from .geometry import Window, as_points
from .model import BoundaryCondition, ModelParams
from .percolation import _chains, label_clusters, origin_connected
from .rng import as_generator
from .samplers import sample_rejection_many

WIRED = BoundaryCondition.wired()

#: One-sided tail probability of a 3 sigma deviation.
THREE_SIGMA_TAIL = float(stats.norm.sf(3.0))


class CubeGrid:
    """Cubes ``e + ε]-1/2, 1/2]^d`` with centres ``e`` in ``window ∩ ε(Z + 1/2)^d``.

    The window bounds must be multiples of ``epsilon`` so that the cubes tile
    it exactly.  Cubes are indexed in lexicographic order of their centres.
    """

    def __init__(self, window: Window, epsilon: float):
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        lo = window.lo / epsilon
        hi = window.hi / epsilon
        if not (np.allclose(lo, np.round(lo), atol=1e-9) and np.allclose(hi, np.round(hi), atol=1e-9)):
            raise ValueError("window bounds must be multiples of epsilon")
        self.window = window
        self.epsilon = float(epsilon)
        self.d = window.d
        self.dims = np.round(hi - lo).astype(np.int64)
        self.t = int(np.prod(self.dims))
        idx = np.array(list(np.ndindex(*self.dims)), dtype=float).reshape(self.t, self.d)
        self.lows = window.lo + self.epsilon * idx
        self.highs = self.lows + self.epsilon
        self.centers = self.lows + self.epsilon / 2

    @classmethod
    def for_box(cls, s: float, per_side: int = 32, d: int = 2) -> "CubeGrid":
        """Grid on ``Λ_s`` with ``per_side`` cubes along each axis."""
        return cls(Window.box(s, d), 2.0 * s / per_side)

    def __len__(self) -> int:
        return self.t

    def cube_of(self, points) -> np.ndarray:
        """Flat cube index of each point (-1 outside the window)."""
        p = as_points(points, self.d)
        c = np.ceil((p - self.window.lo) / self.epsilon).astype(np.int64) - 1
        ok = np.all((c >= 0) & (c < self.dims), axis=1)
        flat = np.ravel_multi_index(tuple(np.clip(c, 0, self.dims - 1).T), self.dims) if len(p) else np.empty(0, np.int64)
        return np.where(ok, flat, -1)

    def counts(self, points) -> np.ndarray:
        """Number of points in each cube."""
        c = self.cube_of(points)
        return np.bincount(c[c >= 0], minlength=self.t)

    def distance_to_box(self, s: float) -> np.ndarray:
        """Euclidean distance from each cube to the closed box ``[-s, s]^d``."""
        gap = np.maximum(np.maximum(self.lows - s, -s - self.highs), 0.0)
        return np.sqrt(np.sum(gap * gap, axis=1))

    def distance_to_surface(self, s: float) -> np.ndarray:
        """Euclidean distance from each cube to ``∂Λ_s`` (the origin for ``s = 0``)."""
        if s == 0:
            return self.distance_to_box(0.0)
        inside = np.all((self.lows > -s) & (self.highs < s), axis=1)
        reach = np.max(np.maximum(np.abs(self.lows), np.abs(self.highs)), axis=1)
        return np.where(inside, s - reach, self.distance_to_box(s))

    def inside_box(self, s: float) -> np.ndarray:
        """Cubes contained in the closed box ``[-s, s]^d``."""
        return np.all((self.lows >= -s) & (self.highs <= s), axis=1)


@dataclass
class DecisionTreeTrace:
    """Visited cubes in order, the stopping time and the decided value of f."""

    visited: np.ndarray
    tau: int
    value: int


def _surface_distance(points, s):
    if s == 0:
        return np.sqrt(np.sum(points * points, axis=1))
    return Window.box(s, points.shape[1]).boundary_distance(points)


def run_exploration_T_s(cfg, grid: CubeGrid, s: float, n: float, r: float) -> DecisionTreeTrace:
    """Explore the r-clusters meeting ``∂Λ_s`` until ``0 ↔_r ∂Λ_n`` is decided.

    The next cube is the lexicographically smallest unvisited cube within
    distance r of ``∂Λ_s`` or within 2r of a revealed point whose cluster
    meets ``∂Λ_s``.  Only points of ``Λ_{n+r}`` can matter for f, so cubes
    missing that box are never queried and points outside it are ignored.
    """
    if not 0 <= s <= n:
        raise ValueError("need 0 <= s <= n")
    d = grid.d
    if n == 0:
        return DecisionTreeTrace(np.empty(0, dtype=np.int64), 0, 1)
    pts = as_points(cfg, d)
    if len(pts):
        pts = pts[np.all(np.abs(pts) <= n + r, axis=1)]
    cube = grid.cube_of(pts)
    pts = pts[cube >= 0]
    cube = cube[cube >= 0]
    order = np.argsort(cube, kind="stable")
    pts = np.ascontiguousarray(pts[order])
    start = np.searchsorted(cube[order], np.arange(grid.t + 1))
    frontier = grid.distance_to_surface(s) <= r
    allowed = grid.distance_to_box(n + r) == 0.0
    touch_s = _surface_distance(pts, s) <= r
    touch_0 = np.sqrt(np.sum(pts * pts, axis=1)) <= r
    touch_n = _surface_distance(pts, n) <= r
    visited, value = _explore.explore(
        pts, start, grid.window.lo, grid.epsilon, grid.dims, frontier, allowed,
        touch_s, touch_0, touch_n, float(r),
    )
    return DecisionTreeTrace(visited.copy(), len(visited), int(value))


def connected_cubes(cfg, grid: CubeGrid, s: float, r: float) -> np.ndarray:
    """Per cube: whether ``Δ_e ⊕ B_r(0)`` is r-connected to ``∂Λ_s`` in ``cfg``."""
    d = grid.d
    out = grid.distance_to_surface(s) <= r
    pts = as_points(cfg, d)
    if len(pts) == 0:
        return out
    lab = label_clusters(pts, r)
    active = lab.touching(_Surface(s))[lab.labels]
    _explore.mark_near(np.ascontiguousarray(pts), active, 2.0 * r, grid.window.lo, grid.epsilon, grid.dims, out)
    return out


@dataclass(frozen=True)
class _Surface:
    s: float

    def distance(self, points):
        return _surface_distance(as_points(points, points.shape[1]), self.s)


# ---------------------------------------------------------------------------
# sampling and estimators


def sample_wired(n: float, params: ModelParams, replicates: int, rng=None) -> list:
    """Draws from the wired measure on ``Λ_{3n+2}`` (Poisson when ``beta = 0``)."""
    rng = as_generator(rng)
    window = Window.box(3 * n + 2, params.d)
    if params.beta == 0:
        counts = rng.poisson(params.z * window.volume, size=replicates)
        return [window.sample_uniform(rng, k) for k in counts]
    return [c.points for c in _chains(window, WIRED, params, replicates, rng)]


@dataclass
class RevealmentEstimate:
    """Per-cube visit frequencies and connection frequencies on shared samples."""

    delta: np.ndarray
    connect: np.ndarray
    excess_stderr: np.ndarray
    taus: np.ndarray
    values: np.ndarray
    replicates: int

    def bound_holds(self, k: float = 3.0) -> bool:
        """``δ(e) <= P(Δ_e ⊕ B_r ↔ ∂Λ_s) + k σ`` for every cube."""
        return bool(np.all(self.delta <= self.connect + k * self.excess_stderr))


def _visits(samples, grid, s, n, r):
    vis = np.zeros((len(samples), grid.t), dtype=bool)
    con = np.zeros((len(samples), grid.t), dtype=bool)
    counts = np.zeros((len(samples), grid.t), dtype=np.int64)
    taus = np.zeros(len(samples), dtype=np.int64)
    values = np.zeros(len(samples), dtype=np.int64)
    for i, pts in enumerate(samples):
        tr = run_exploration_T_s(pts, grid, s, n, r)
        vis[i, tr.visited] = True
        taus[i] = tr.tau
        values[i] = tr.value
        con[i] = connected_cubes(pts, grid, s, r)
        counts[i] = grid.counts(pts)
    return vis, con, counts, taus, values


def estimate_revealment(grid: CubeGrid, s: float, n: float, params: ModelParams,
                        replicates: int, rng=None, samples=None) -> RevealmentEstimate:
    """Empirical revealment ``δ(e, T_s)`` under the wired measure on ``Λ_{3n+2}``.

    The connection frequencies of ``Δ_e ⊕ B_r(0)`` with ``∂Λ_s`` are computed
    on the same samples, with the standard error of the paired difference.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if samples is None:
        samples = sample_wired(n, params, replicates, rng)
    vis, con, _, taus, values = _visits(samples, grid, s, n, params.r)
    m = len(samples)
    diff = vis.astype(float) - con
    se = diff.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.zeros(grid.t)
    return RevealmentEstimate(vis.mean(axis=0), con.mean(axis=0), se, taus, values, m)


@dataclass
class OsssReport:
    """Both sides of ``Var(f) <= 2 Σ_e δ(e) Cov(f, #ω_e)`` with error bars."""

    var_f: float
    rhs: float
    slack: float
    stderr: float
    delta: np.ndarray
    cov: np.ndarray
    cov_stderr: np.ndarray
    discretization: float
    fkg_threshold: float
    replicates: int

    @property
    def holds(self) -> bool:
        """``Var(f) <= RHS + 3σ`` (the ε^d term is reported, not used)."""
        return self.var_f <= self.rhs + 3.0 * self.stderr

    @property
    def fkg_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self.cov / self.cov_stderr
        return np.where(self.cov_stderr > 0, z, np.where(self.cov < 0, -np.inf, 0.0))

    @property
    def fkg_violations_3sigma(self) -> int:
        """Cubes with ``Cov < -3σ`` taken one at a time."""
        return int(np.sum(self.fkg_scores < -3.0))

    @property
    def fkg_violations(self) -> int:
        """Cubes below the familywise threshold (overall 3σ error rate)."""
        return int(np.sum(self.fkg_scores < -self.fkg_threshold))


def _osss_sides(f, counts, vis):
    fc = f - f.mean()
    cov = (fc[:, None] * (counts - counts.mean(axis=0))).mean(axis=0)
    delta = vis.mean(axis=0)
    return float(np.mean(fc * fc)), 2.0 * float(np.sum(delta * cov)), cov, delta


def check_osss(grid: CubeGrid, s: float, n: float, params: ModelParams, replicates: int,
               rng=None, samples=None, blocks: int = 50) -> OsssReport:
    """Estimate ``Var(f)``, ``Cov(f, #ω_e)`` and ``δ(e, T_s)`` from one sample pool.

    The error of ``Var(f) - RHS`` is a grouped jackknife over ``blocks``
    blocks.  Per-cube covariance errors use the spread of
    ``(f - Ef)(N_e - EN_e)``, floored by its value ``Var(f) Var(N_e)`` under
    independence.
    """
    if samples is None:
        samples = sample_wired(n, params, replicates, rng)
    vis, _, counts, _, values = _visits(samples, grid, s, n, params.r)
    f = values.astype(float)
    counts = counts.astype(float)
    m = len(f)
    var_f, rhs, cov, delta = _osss_sides(f, counts, vis)
    infl = (f - f.mean())[:, None] * (counts - counts.mean(axis=0))
    # with rare joint events the influence spread is too optimistic; the
    # spread under independence (the null of the FKG test) bounds it
    spread = np.maximum(infl.var(axis=0, ddof=1), f.var() * counts.var(axis=0))
    cov_se = np.sqrt(spread / m)
    g = max(2, min(blocks, m))
    groups = np.array_split(np.arange(m), g)
    slack_loo = []
    for idx in groups:
        keep = np.ones(m, dtype=bool)
        keep[idx] = False
        v, rh, _, _ = _osss_sides(f[keep], counts[keep], vis[keep])
        slack_loo.append(rh - v)
    slack_loo = np.array(slack_loo)
    se = math.sqrt((g - 1) / g * np.sum((slack_loo - slack_loo.mean()) ** 2))
    # Šidák: per-cube level giving an overall 3-sigma one-sided error rate
    per_cube = -math.expm1(math.log1p(-THREE_SIGMA_TAIL) / grid.t)
    return OsssReport(
        var_f=var_f, rhs=rhs, slack=rhs - var_f, stderr=se, delta=delta, cov=cov,
        cov_stderr=cov_se, discretization=grid.epsilon ** grid.d,
        fkg_threshold=float(stats.norm.isf(per_cube)), replicates=m,
    )


# ---------------------------------------------------------------------------
# derivative of the mean versus covariance with the count


@dataclass
class DerivativeReport:
    """Finite difference of ``E_z f`` against ``Cov_z(f, #ω) / z``."""

    derivative: float
    derivative_stderr: float
    covariance: float
    covariance_stderr: float
    replicates: int

    @property
    def difference(self) -> float:
        return self.derivative - self.covariance

    @property
    def stderr(self) -> float:
        return math.hypot(self.derivative_stderr, self.covariance_stderr)

    @property
    def relative_discrepancy(self) -> float:
        scale = max(abs(self.derivative), abs(self.covariance))
        return abs(self.difference) / scale if scale > 0 else 0.0

    def agrees(self, k: float = 3.0) -> bool:
        return abs(self.difference) <= k * self.stderr


def connection_indicator(n: float, r: float):
    """``f(ω) = 1{0 ↔_r ∂Λ_n}``."""
    def f(points):
        return float(origin_connected(points, r, n))
    return f


def _evaluate(f, samples) -> np.ndarray:
    return np.array([f(c.points) for c in samples], dtype=float)


def check_derivative_covariance(n: float, params: ModelParams, f=None, h: float = 0.05,
                                replicates: int = 10**4, rng=None) -> DerivativeReport:
    """Compare ``(E_{z+h} f - E_{z-h} f) / 2h`` with ``Cov_z(f, #ω) / z``.

    All three measures are the wired specification on ``Λ_n`` sampled
    exactly by rejection; the draws at ``z ± h`` share their seed.  ``f``
    defaults to the connection indicator ``1{0 ↔_r ∂Λ_n}``.
    """
    if h <= 0 or params.z - h <= 0:
        raise ValueError("need 0 < h < z")
    rng = as_generator(rng)
    if f is None:
        f = connection_indicator(n, params.r)
    window = Window.box(n, params.d)
    g_mid, g_fd = rng.spawn(2)
    mid = sample_rejection_many(window, WIRED, params, replicates, g_mid)
    fd_seed = int(g_fd.integers(2**63))
    up = sample_rejection_many(window, WIRED, params.with_(z=params.z + h), replicates,
                               np.random.default_rng(fd_seed))
    down = sample_rejection_many(window, WIRED, params.with_(z=params.z - h), replicates,
                                 np.random.default_rng(fd_seed))
    fu, fd = _evaluate(f, up), _evaluate(f, down)
    diff = (fu - fd) / (2 * h)
    fm = _evaluate(f, mid)
    counts = np.array([len(c) for c in mid], dtype=float)
    infl = (fm - fm.mean()) * (counts - counts.mean()) / params.z
    return DerivativeReport(
        derivative=float(diff.mean()),
        derivative_stderr=float(diff.std(ddof=1) / math.sqrt(replicates)),
        covariance=float(infl.mean()),
        covariance_stderr=float(infl.std(ddof=1) / math.sqrt(replicates)),
        replicates=replicates,
    )

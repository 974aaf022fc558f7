"""r-connectivity: cluster labeling, connection probabilities, decay fits and thresholds.

Two points are adjacent when their radius-``r`` balls overlap, i.e. when
their distance is at most ``2r``.  A set ``A`` is connected to ``B`` when a
single cluster's ball union meets both (or the sets meet directly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _clusters
from .geometry import Configuration, Window, as_point, as_points
from .model import BoundaryCondition, ModelParams
from .rng import as_generator
from .samplers import sample_mcmc_chain, sample_rejection_many

WIRED = BoundaryCondition.wired()


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class PointSet:
    """A single point (the origin by default)."""

    center: tuple

    def distance(self, points) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        p = as_points(points, len(c))
        return np.sqrt(np.sum((p - c) ** 2, axis=1))


@dataclass(frozen=True)
class ClosedBox:
    """Closed box; degenerate sides are allowed (faces)."""

    lower: tuple
    upper: tuple

    def distance(self, points) -> np.ndarray:
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        p = as_points(points, len(lo))
        gap = np.maximum(np.maximum(lo - p, p - hi), 0.0)
        return np.sqrt(np.sum(gap * gap, axis=1))


@dataclass(frozen=True)
class BoxSurface:
    """Topological boundary of a closed box."""

    lower: tuple
    upper: tuple

    def distance(self, points) -> np.ndarray:
        return Window(self.lower, self.upper).boundary_distance(points)


def origin(d: int = 2) -> PointSet:
    return PointSet((0.0,) * d)


def box_boundary(s: float, d: int = 2):
    """``∂Λ_s``; for ``s = 0`` the box degenerates to the origin."""
    if s == 0:
        return origin(d)
    return BoxSurface((-float(s),) * d, (float(s),) * d)


def closed_box(s: float, d: int = 2) -> ClosedBox:
    return ClosedBox((-float(s),) * d, (float(s),) * d)


def face(window: Window, axis: int, upper: bool) -> ClosedBox:
    lo = list(window.lower)
    hi = list(window.upper)
    if upper:
        lo[axis] = hi[axis]
    else:
        hi[axis] = lo[axis]
    return ClosedBox(tuple(lo), tuple(hi))


def _box_of(region):
    return np.asarray(region.lower, float), np.asarray(region.upper, float)


def regions_touch(a, b) -> bool:
    """Whether two regions intersect."""
    if isinstance(b, PointSet) and not isinstance(a, PointSet):
        a, b = b, a
    if isinstance(a, PointSet):
        return bool(b.distance(np.asarray(a.center).reshape(1, -1))[0] == 0.0)
    alo, ahi = _box_of(a)
    blo, bhi = _box_of(b)
    if np.any(alo > bhi) or np.any(blo > ahi):
        return False
    if isinstance(a, ClosedBox) and isinstance(b, ClosedBox):
        return True
    # a surface meets a closed box unless the box sits in its open interior
    # (or, for two surfaces, one box sits in the other's open interior)
    def strictly_inside(inner_lo, inner_hi, outer_lo, outer_hi):
        return bool(np.all(inner_lo > outer_lo) and np.all(inner_hi < outer_hi))

    if isinstance(a, BoxSurface) and strictly_inside(blo, bhi, alo, ahi):
        return False
    if isinstance(b, BoxSurface) and strictly_inside(alo, ahi, blo, bhi):
        return False
    if isinstance(a, ClosedBox) and isinstance(b, BoxSurface):
        return True
    if isinstance(a, BoxSurface) and isinstance(b, ClosedBox):
        return True
    # two surfaces: they miss each other only if one box lies inside the other
    return True


# ---------------------------------------------------------------------------
# labeling


@dataclass
class ClusterLabeling:
    """Union-find result over the configuration's points."""

    points: np.ndarray
    r: float
    parent: np.ndarray
    rank: np.ndarray
    labels: np.ndarray
    n_components: int

    def touching(self, region) -> np.ndarray:
        """Boolean per component: some ball of the component meets ``region``."""
        flags = np.zeros(self.n_components, dtype=bool)
        if len(self.points):
            hit = region.distance(self.points) <= self.r
            flags[self.labels[hit]] = True
        return flags

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_components)


def label_clusters(cfg, r: float) -> ClusterLabeling:
    """Label the clusters of ``cfg`` under adjacency ``|x - y| <= 2r``."""
    if r <= 0:
        raise ValueError("r must be positive")
    pts = cfg.points if isinstance(cfg, Configuration) else np.asarray(cfg, dtype=float)
    pts = np.ascontiguousarray(pts.reshape(len(pts), -1) if len(pts) else np.empty((0, 2)))
    if len(pts) == 0:
        empty = np.empty(0, dtype=np.int64)
        return ClusterLabeling(pts, r, empty, empty, empty, 0)
    parent, rank, labels = _clusters.label(pts, 2.0 * r)
    n_comp = int(labels.max()) + 1
    return ClusterLabeling(pts, r, parent, rank, labels, n_comp)


def is_connected(cfg, r: float, set_a, set_b, labeling: ClusterLabeling | None = None) -> bool:
    """Whether ``B_r(cfg) ∪ A ∪ B`` has a component meeting both ``A`` and ``B``."""
    if regions_touch(set_a, set_b):
        return True
    lab = labeling if labeling is not None else label_clusters(cfg, r)
    if lab.n_components == 0:
        return False
    return bool(np.any(lab.touching(set_a) & lab.touching(set_b)))


def origin_connected(cfg, r: float, n: float) -> bool:
    """The event ``0 ↔_r ∂Λ_n`` (always true for n = 0)."""
    if n == 0:
        return True
    pts = cfg.points if isinstance(cfg, Configuration) else as_points(cfg, 2)
    d = pts.shape[1] if len(pts) else 2
    return is_connected(pts, r, origin(d), box_boundary(n, d))


def crossing(cfg, r: float, window: Window, axis: int = 0) -> bool:
    """Left-right crossing of ``window`` along ``axis`` by points inside it."""
    pts = cfg.points if isinstance(cfg, Configuration) else as_points(cfg, window.d)
    pts = pts[window.contains(pts)] if len(pts) else pts
    return is_connected(pts, r, face(window, axis, False), face(window, axis, True))


# ---------------------------------------------------------------------------
# connection probabilities


@dataclass(frozen=True)
class ThetaEstimate:
    n: int
    theta: float
    stderr: float
    replicates: int


def _chains(window, bc, params, count, rng, per_chain=50) -> list:
    """``count`` states from independent birth-death chains."""
    out = []
    chains = int(math.ceil(count / per_chain))
    for g in rng.spawn(chains):
        take = min(per_chain, count - len(out))
        out.extend(sample_mcmc_chain(window, bc, params, take, g))
    return out


def sample_connection_measure(n: int, params: ModelParams, replicates: int, rng=None,
                              sampler: str = "auto") -> list:
    """Configurations relevant to ``0 ↔_r ∂Λ_n`` under the wired measure on ``Λ_{3n+2}``.

    For ``beta = 0`` the wired measure is Poisson(z) and only points of
    ``Λ_{n+r}`` can touch the event, so only that box is sampled.
    """
    rng = as_generator(rng)
    d = params.d
    if sampler == "auto":
        sampler = "poisson" if params.beta == 0 else "mcmc"
    if sampler == "poisson":
        if params.beta != 0:
            raise ValueError("the Poisson shortcut needs beta = 0")
        box = Window.box(n + params.r, d)
        counts = rng.poisson(params.z * box.volume, size=replicates)
        return [box.sample_uniform(rng, k) for k in counts]
    window = Window.box(3 * n + 2, d)
    if sampler == "rejection":
        return [c.points for c in sample_rejection_many(window, WIRED, params, replicates, rng)]
    if sampler == "mcmc":
        return [c.points for c in _chains(window, WIRED, params, replicates, rng)]
    raise ValueError(f"unknown sampler {sampler!r}")


def estimate_theta(n: int, params: ModelParams, replicates: int, rng=None,
                   sampler: str = "auto") -> ThetaEstimate:
    """Monte Carlo estimate of ``θ_n = μ_n(0 ↔_r ∂Λ_n)`` with binomial error.

    ``θ_0 = 1`` by convention.
    """
    if n == 0:
        return ThetaEstimate(0, 1.0, 0.0, replicates)
    samples = sample_connection_measure(n, params, replicates, rng, sampler)
    hits = np.array([origin_connected(s, params.r, n) for s in samples], dtype=float)
    p = float(hits.mean())
    return ThetaEstimate(n, p, math.sqrt(p * (1 - p) / len(hits)), len(hits))


def _surface_within(absolute, ns, r):
    """For each n, whether some point (given by |coordinates|) lies within r of the surface of [-n, n]^d."""
    sup = absolute.max(axis=1)
    inner = np.any((sup[:, None] <= ns[None, :]) & (ns[None, :] - sup[:, None] <= r), axis=0)
    gap = np.maximum(absolute[:, None, :] - ns[None, :, None], 0.0)
    outer = np.any((np.sum(gap * gap, axis=2) <= r * r) & (sup[:, None] > ns[None, :]), axis=0)
    return (inner | outer) & (ns > 0)


def theta_table(ns, zs, r: float, replicates: int, rng=None, d: int = 2) -> np.ndarray:
    """Paired Poisson indicators ``0 ↔_r ∂Λ_n`` for every (replicate, z, n).

    One marked Poisson(max z) sample on ``Λ_{max n + r}`` per replicate is
    thinned to each ``z`` (keep marks below ``z / max z``), so the
    indicators are monotone in ``z`` and in ``n`` sample by sample.
    """
    rng = as_generator(rng)
    ns = np.asarray(list(ns), dtype=float)
    zs = np.asarray(zs, dtype=float)
    zmax = float(zs.max())
    box = Window.box(float(ns.max()) + r, d)
    out = np.zeros((replicates, len(zs), len(ns)), dtype=bool)
    out[:, :, ns == 0] = True
    for i in range(replicates):
        k = rng.poisson(zmax * box.volume)
        pts = box.sample_uniform(rng, k)
        marks = rng.random(k)
        for a, z in enumerate(zs):
            sub = pts[marks <= z / zmax]
            if len(sub) == 0:
                continue
            seeds = np.sum(sub * sub, axis=1) <= r * r
            if not np.any(seeds):
                continue
            reach = np.abs(sub[_clusters.cluster_mask(sub, 2.0 * r, seeds)])
            out[i, a] |= _surface_within(reach, ns, r)
    return out


# ---------------------------------------------------------------------------
# decay fit


@dataclass(frozen=True)
class DecayFit:
    """Weighted least-squares fit ``ln θ_n ≈ intercept - alpha1 * n``."""

    alpha1: float
    intercept: float
    r_squared: float
    n_range: tuple
    alpha1_stderr: float = float("nan")

    def ci(self, level: float = 0.95) -> tuple:
        q = stats.norm.ppf(0.5 + level / 2)
        return self.alpha1 - q * self.alpha1_stderr, self.alpha1 + q * self.alpha1_stderr


def fit_decay(ns, thetas, stderrs=None) -> DecayFit:
    """Fit exponential decay of a connection curve.

    Weights are the inverse variances of ``ln θ`` (delta method); with
    missing or zero standard errors the fit is unweighted.
    """
    ns = np.asarray(ns, dtype=float)
    th = np.asarray(thetas, dtype=float)
    if np.all(th <= 0):
        raise ValueError("all connection probabilities are zero")
    keep = th > 0
    ns, th = ns[keep], th[keep]
    if len(ns) < 4:
        raise ValueError("need at least 4 positive points to fit a decay")
    y = np.log(th)
    if stderrs is None:
        w = np.ones_like(y)
        weighted = False
    else:
        se = np.asarray(stderrs, dtype=float)[keep]
        weighted = bool(np.all(se > 0))
        w = (th / se) ** 2 if weighted else np.ones_like(y)
    xm = np.sum(w * ns) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (ns - xm) ** 2)
    slope = np.sum(w * (ns - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * ns)
    ss_res = float(np.sum(w * resid**2))
    ss_tot = float(np.sum(w * (y - ym) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 or ss_res <= 1e-24 * max(ss_tot, 1.0) else 1.0 - ss_res / ss_tot
    r2 = min(1.0, max(0.0, r2))
    dof = len(ns) - 2
    if weighted:
        scale = max(1.0, ss_res / dof) if dof > 0 else 1.0
    else:
        scale = ss_res / dof if dof > 0 else 0.0
    se_slope = math.sqrt(scale / sxx)
    return DecayFit(-float(slope), float(intercept), r2, (float(ns.min()), float(ns.max())), se_slope)


# ---------------------------------------------------------------------------
# thresholds


class ThresholdError(RuntimeError):
    """The crossing probability does not cross 1/2 inside the search bracket."""


@dataclass(frozen=True)
class ThresholdEstimate:
    z_hat: float
    ci_low: float
    ci_high: float
    method: str
    box_sizes: tuple
    per_box: tuple = ()
    stderr: float = float("nan")


def poisson_critical_activities(n: float, r: float, z_max: float, replicates: int,
                                rng=None, d: int = 2) -> np.ndarray:
    """Per-sample activity at which ``Λ_n`` first has a left-right crossing.

    Each replicate is a marked Poisson(z_max) sample; the sample at activity
    ``z`` keeps marks ``<= z / z_max``, so crossing is monotone in ``z`` and
    happens exactly from the returned value on (``inf`` if never).
    """
    rng = as_generator(rng)
    box = Window.box(n, d)
    left = face(box, 0, False)
    right = face(box, 0, True)
    out = np.empty(replicates)
    for i in range(replicates):
        k = rng.poisson(z_max * box.volume)
        pts = box.sample_uniform(rng, k)
        marks = rng.random(k)
        ta = left.distance(pts) <= r
        tb = right.distance(pts) <= r
        out[i] = _clusters.critical_marks(pts, marks, 2.0 * r, ta, tb) * z_max
    return out


def _median_with_error(crit: np.ndarray) -> tuple:
    srt = np.sort(crit)
    m = len(srt)
    half = 1.96 * math.sqrt(m) / 2
    lo = srt[max(0, int(math.floor(m / 2 - half)))]
    hi = srt[min(m - 1, int(math.ceil(m / 2 + half)))]
    return float(np.median(srt)), float((hi - lo) / (2 * 1.96))


def _curves_cross(crit_small: np.ndarray, crit_large: np.ndarray, near: float):
    grid = np.linspace(0.5 * near, 1.5 * near, 401)
    p_small = np.searchsorted(np.sort(crit_small), grid, side="right") / len(crit_small)
    p_large = np.searchsorted(np.sort(crit_large), grid, side="right") / len(crit_large)
    diff = p_large - p_small
    sign_change = np.nonzero(np.diff(np.sign(diff)) != 0)[0]
    if len(sign_change) == 0:
        return None
    best = sign_change[np.argmin(np.abs(grid[sign_change] - near))]
    return float(grid[best])


def _poisson_mark_ceiling(n, params, z_lo, z_hi, rng, pilot=16) -> float:
    """Smallest doubling of ``z_lo`` at which most pilot samples cross, doubled.

    Dominating samples at this activity are large enough to contain the
    crossing threshold of almost every replicate while staying cheap.
    """
    z = z_lo
    while True:
        crit = poisson_critical_activities(n, params.r, z, pilot, rng, params.d)
        if np.mean(np.isfinite(crit)) >= 0.75 or z >= z_hi:
            return min(z_hi, 2.0 * z)
        z = min(z_hi, 2.0 * z)


def _area_crossing_probability(n, params, replicates, seed_rng, buffer):
    window = Window.box(n + buffer, params.d)
    box = Window.box(n, params.d)
    samples = _chains(window, WIRED, params, replicates, seed_rng)
    return float(np.mean([crossing(s, params.r, box) for s in samples]))


def estimate_threshold(params: ModelParams, box_sizes, replicates: int, rng=None,
                       z_range: tuple = (0.05, 20.0), buffer: float = 2.0,
                       iterations: int = 10) -> ThresholdEstimate:
    """Activity where the left-right crossing probability of ``Λ_n`` equals 1/2.

    ``params.z`` is ignored.  For ``beta = 0`` the per-sample critical
    activities of marked Poisson samples are computed exactly and the
    estimate is their median (the bisection limit of the empirical crossing
    curve).  For ``beta > 0`` the crossing probability under the wired
    measure on ``Λ_{n+buffer}`` is bisected in ``z`` with common seeds.
    The estimate refers to the largest box; the interval spans the
    estimates of all boxes, the crossing point of the two largest crossing
    curves, and two standard errors of the largest-box estimate.
    """
    rng = as_generator(rng)
    sizes = sorted(float(s) for s in box_sizes)
    if len(sizes) < 2:
        raise ValueError("need at least two box sizes")
    z_lo, z_hi = z_range
    per_box = []
    errs = []
    cross = None
    if params.beta == 0:
        z_max = _poisson_mark_ceiling(sizes[0], params, z_lo, z_hi, rng)
        crits = []
        for n, g in zip(sizes, rng.spawn(len(sizes))):
            crit = poisson_critical_activities(n, params.r, z_max, replicates, g, params.d)
            if np.mean(np.isfinite(crit)) <= 0.5:
                raise ThresholdError(f"box {n}: crossing probability stays below 1/2 up to z={z_hi}")
            zh, se = _median_with_error(crit)
            if zh <= z_lo:
                raise ThresholdError(f"box {n}: crossing probability exceeds 1/2 at z={z_lo}")
            crits.append(crit)
            per_box.append(zh)
            errs.append(se)
        cross = _curves_cross(crits[-2], crits[-1], per_box[-1])
        method = "median of exact per-sample critical activities (Poisson)"
    else:
        for n, g in zip(sizes, rng.spawn(len(sizes))):
            seed = int(g.integers(2**63))

            def prob(z):
                return _area_crossing_probability(
                    n, params.with_(z=z), replicates, np.random.default_rng(seed), buffer
                )

            # bracket by doubling from below: large z makes the chains expensive
            a = z_lo
            if prob(a) >= 0.5:
                raise ThresholdError(f"box {n}: crossing probability exceeds 1/2 at z={a}")
            b = min(2 * a, z_hi)
            while prob(b) < 0.5:
                if b >= z_hi:
                    raise ThresholdError(f"box {n}: crossing probability stays below 1/2 up to z={z_hi}")
                a, b = b, min(2 * b, z_hi)
            for _ in range(iterations):
                mid = math.sqrt(a * b)
                if prob(mid) >= 0.5:
                    b = mid
                else:
                    a = mid
            zh = math.sqrt(a * b)
            step = 0.05 * zh
            slope = (prob(zh + step) - prob(zh - step)) / (2 * step)
            se = 0.5 / math.sqrt(replicates) / slope if slope > 0 else 0.1 * zh
            se = math.sqrt(se**2 + (b - a) ** 2 / 12)
            per_box.append(zh)
            errs.append(se)
        method = "bisection of the wired-measure crossing probability (common seeds)"
    z_hat = per_box[-1]
    spread = list(per_box) + ([cross] if cross is not None else [])
    ci_low = min(spread) - 2 * errs[-1]
    ci_high = max(spread) + 2 * errs[-1]
    return ThresholdEstimate(
        z_hat=z_hat, ci_low=ci_low, ci_high=ci_high, method=method,
        box_sizes=tuple(sizes), per_box=tuple(per_box), stderr=errs[-1],
    )

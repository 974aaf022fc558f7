"""Samplers for the Poisson process and the area-interaction specification.

* :func:`sample_rejection` draws exactly, by accepting Poisson(z) proposals
  with probability ``exp(-beta H)``; practical on small windows.
* :func:`sample_mcmc` runs a birth-death Metropolis-Hastings chain whose
  acceptance ratios are Papangelou intensities; used on large windows.
* :func:`sample_by_thinning` implements the sequential thinning map: dominating
  marked Poisson points are swept cube by cube in lexicographic order and a
  point is kept when its mark is below the thinning probability.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _sampling
from ._volume import region_volume
from .geometry import LEAF_DIAMETER, Configuration, Window, as_point, as_points
from .model import FREE, BoundaryCondition, ModelParams
from .rng import as_generator, kernel_seed, key_generator

#: Minimum number of proposals per sweep of the birth-death chain.
MIN_SWEEP = 20
BURN_IN_SWEEPS = 50
THIN_SWEEPS = 5


class SamplerError(RuntimeError):
    """A sampler gave up; carries the empirical acceptance rate."""

    def __init__(self, message: str, acceptance_rate: float):
        super().__init__(f"{message} (acceptance rate {acceptance_rate:.3g})")
        self.acceptance_rate = acceptance_rate


@dataclass
class SamplerStats:
    """Counters accumulated over sampler calls."""

    proposals: int = 0
    acceptances: int = 0
    sweeps: float = 0.0
    seed: int | None = None
    wall_time: float = 0.0

    @property
    def acceptance_rate(self) -> float:
        return self.acceptances / self.proposals if self.proposals else float("nan")


def _split(flat: np.ndarray, counts: np.ndarray, d: int) -> list:
    out = []
    start = 0
    for c in counts:
        out.append(Configuration(flat[start : start + c], d))
        start += c
    return out


def _no_boxes(d):
    return np.empty((0, 2 * d))


def sample_poisson(window: Window, intensity: float, rng=None) -> Configuration:
    """Homogeneous Poisson process of the given intensity on ``window``."""
    if intensity < 0:
        raise ValueError("intensity must be >= 0")
    rng = as_generator(rng)
    k = rng.poisson(intensity * window.volume) if intensity > 0 else 0
    return Configuration(window.sample_uniform(rng, k), window.d)


def _environment(window: Window, bc: BoundaryCondition, params: ModelParams):
    shadow, lo, hi, empty = bc.environment(window)
    beta = 0.0 if empty else params.beta
    return shadow, lo, hi, beta


def sample_rejection_many(
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    n_samples: int,
    rng=None,
    max_attempts: int = 10**6,
    stats: SamplerStats | None = None,
) -> list:
    """``n_samples`` independent exact draws (see :func:`sample_rejection`)."""
    rng = as_generator(rng)
    d = window.d
    shadow, clo, chi, beta = _environment(window, bc, params)
    seed = kernel_seed(rng)
    t0 = time.perf_counter()
    flat, counts, attempts, ok = _sampling.rejection_batch(
        window.lo, window.hi, -np.inf, _no_boxes(d), np.empty((0, d)), 0.0,
        shadow, clo, chi, params.z, beta, LEAF_DIAMETER[d],
        int(n_samples), int(max_attempts), seed,
    )
    if stats is not None:
        stats.proposals += int(attempts)
        stats.acceptances += len(counts)
        stats.seed = seed
        stats.wall_time += time.perf_counter() - t0
    if not ok:
        rate = len(counts) / max(int(attempts), 1)
        raise SamplerError(f"no acceptance within {max_attempts} attempts", rate)
    return _split(flat, counts, d)


def sample_rejection(
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    rng=None,
    max_attempts: int = 10**6,
    stats: SamplerStats | None = None,
) -> Configuration:
    """Exact draw from the area-interaction law on ``window`` with boundary ``bc``.

    Proposals are Poisson(z) configurations accepted with probability
    ``exp(-beta H)``; the acceptance test only refines the volume until it is
    decided.
    """
    return sample_rejection_many(window, bc, params, 1, rng, max_attempts, stats)[0]


def sweep_length(window: Window, params: ModelParams) -> int:
    """Proposals per sweep: the mean Poisson(z) occupancy, at least MIN_SWEEP."""
    return max(MIN_SWEEP, int(math.ceil(params.z * window.volume)))


def birth_acceptance(gamma: float, n: int, volume: float) -> float:
    """Acceptance of a birth at intensity ``gamma`` in a state with ``n`` points."""
    return min(1.0, gamma * volume / (n + 1))


def death_acceptance(gamma: float, n: int, volume: float) -> float:
    """Acceptance of removing a point of intensity ``gamma`` from a state with ``n`` points."""
    return min(1.0, n / (gamma * volume))


def sample_mcmc_chain(
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    n_samples: int,
    rng=None,
    burn_in_sweeps: float = BURN_IN_SWEEPS,
    thin_sweeps: float = THIN_SWEEPS,
    init=None,
    stats: SamplerStats | None = None,
) -> list:
    """Thinned states of one birth-death chain after burn-in."""
    rng = as_generator(rng)
    d = window.d
    shadow, clo, chi, beta = _environment(window, bc, params)
    sweep = sweep_length(window, params)
    burn = max(1, int(round(burn_in_sweeps * sweep)))
    thin = max(1, int(round(thin_sweeps * sweep)))
    start = as_points(init, d).copy() if init is not None else np.empty((0, d))
    seed = kernel_seed(rng)
    t0 = time.perf_counter()
    flat, counts, proposals, accepted = _sampling.mcmc_run(
        start, window.lo, window.hi, shadow, clo, chi, params.z, beta,
        LEAF_DIAMETER[d], burn, thin, int(n_samples), seed,
    )
    if stats is not None:
        stats.proposals += int(proposals)
        stats.acceptances += int(accepted)
        stats.sweeps += proposals / sweep
        stats.seed = seed
        stats.wall_time += time.perf_counter() - t0
    return _split(flat, counts, d)


def sample_mcmc(
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    rng=None,
    sweeps: float = BURN_IN_SWEEPS,
    init=None,
    stats: SamplerStats | None = None,
) -> Configuration:
    """Final state of a birth-death chain run for ``sweeps`` sweeps.

    Births at uniform ``x`` are accepted with probability
    ``min(1, gamma(x, w) |W| / (n + 1))`` and deaths of a uniform point with
    ``min(1, n / (gamma(x, w - x) |W|))``.
    """
    return sample_mcmc_chain(
        window, bc, params, 1, rng, burn_in_sweeps=sweeps, init=init, stats=stats
    )[0]


# ---------------------------------------------------------------------------
# sequential thinning


@dataclass
class MarkedConfiguration:
    """Points with uniform marks ``u`` and per-point oracle keys.

    The key seeds all randomness used when deciding that point, so runs that
    share a point also share its thinning-probability draws.
    """

    points: np.ndarray
    marks: np.ndarray
    keys: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.marks = np.asarray(self.marks, dtype=float)
        self.keys = np.asarray(self.keys, dtype=np.uint64)
        if not (len(self.points) == len(self.marks) == len(self.keys)):
            raise ValueError("points, marks and keys must have equal length")
        if np.any((self.marks < 0) | (self.marks > 1)):
            raise ValueError("marks must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, mask) -> "MarkedConfiguration":
        mask = np.asarray(mask)
        return MarkedConfiguration(self.points[mask], self.marks[mask], self.keys[mask])

    def issubset(self, other: "MarkedConfiguration") -> bool:
        theirs = {
            (p.tobytes(), float(u), int(k))
            for p, u, k in zip(other.points, other.marks, other.keys)
        }
        return all(
            (p.tobytes(), float(u), int(k)) in theirs
            for p, u, k in zip(self.points, self.marks, self.keys)
        )


def marked_poisson(window: Window, z: float, rng=None) -> MarkedConfiguration:
    """Poisson(z) points on ``window`` with independent uniform marks."""
    rng = as_generator(rng)
    k = rng.poisson(z * window.volume)
    pts = window.sample_uniform(rng, k)
    marks = rng.random(k)
    keys = rng.integers(0, 2**63, size=k, dtype=np.uint64)
    return MarkedConfiguration(pts, marks, keys)


def marked_tuple(window: Window, z: float, copies: int, rng=None) -> list:
    """Independent marked Poisson copies, one per cube."""
    rng = as_generator(rng)
    return [marked_poisson(window, z, rng) for _ in range(copies)]


def tuple_issubset(small: Sequence, large: Sequence) -> bool:
    """Order on marked tuples: each copy of ``small`` is contained in ``large``."""
    return len(small) == len(large) and all(a.issubset(b) for a, b in zip(small, large))


@dataclass(frozen=True)
class Region:
    """Window minus some boxes and closed balls, cut to first coordinate > after."""

    window: Window
    excluded_boxes: tuple = ()
    excluded_centers: np.ndarray = field(default=None, repr=False)
    excluded_radius: float = 0.0
    after: float = -np.inf

    @property
    def d(self) -> int:
        return self.window.d

    def boxes_array(self) -> np.ndarray:
        if not self.excluded_boxes:
            return np.empty((0, 2 * self.d))
        return np.array([list(b.lower) + list(b.upper) for b in self.excluded_boxes])

    def centers_array(self) -> np.ndarray:
        if self.excluded_centers is None:
            return np.empty((0, self.d))
        return np.asarray(self.excluded_centers, dtype=float).reshape(-1, self.d)

    def beyond(self, x) -> "Region":
        return Region(
            self.window, self.excluded_boxes, self.excluded_centers,
            self.excluded_radius, max(self.after, float(x[0])),
        )

    def contains(self, points) -> np.ndarray:
        p = as_points(points, self.d)
        ok = self.window.contains(p) & (p[:, 0] > self.after)
        for b in self.excluded_boxes:
            ok &= ~b.contains(p)
        c = self.centers_array()
        if len(c):
            d2 = np.sum((p[:, None, :] - c[None, :, :]) ** 2, axis=2)
            ok &= ~np.any(d2 <= self.excluded_radius**2, axis=1)
        return ok

    def poisson(self, z: float, rng: np.random.Generator) -> np.ndarray:
        """Poisson(z) points in the region, in lexicographic order."""
        lo = self.window.lo.copy()
        hi = self.window.hi
        lo[0] = max(lo[0], self.after)
        if np.any(hi <= lo):
            return np.empty((0, self.d))
        k = rng.poisson(z * float(np.prod(hi - lo)))
        pts = rng.uniform(lo, hi, size=(k, self.d))
        pts = pts[self.contains(pts)]
        return pts[np.lexsort(pts.T[::-1])] if len(pts) > 1 else pts


class _Env:
    """Boundary shadows and clip box shared by the thinning routines."""

    def __init__(self, window: Window, bc: BoundaryCondition, params: ModelParams):
        self.shadow, self.clo, self.chi, self.beta = _environment(window, bc, params)
        self.z = params.z
        self.leaf = LEAF_DIAMETER[window.d]


def _near(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return points
    return points[np.sum((points - x) ** 2, axis=1) <= 4.0]


def _energy_at_most(x, shadow, env: _Env, threshold: float) -> bool:
    return region_volume(x.reshape(1, -1), shadow, env.clo, env.chi, env.leaf, threshold)[3] == 1


def _mean_weight_at_least(x, shadows: list, env: _Env, u: float) -> bool:
    """Decide ``mean_j exp(-beta e_j) >= u`` with progressively finer bounds.

    The decision is the one the full-resolution midpoint estimates give.
    """
    if len(shadows) == 1:
        if u <= 0:
            return True
        return _energy_at_most(x, shadows[0], env, -math.log(u) / env.beta)
    xx = x.reshape(1, -1)
    leaf = 0.25
    while True:
        last = leaf <= env.leaf
        use = env.leaf if last else leaf
        lo = np.empty(len(shadows))
        hi = np.empty(len(shadows))
        est = np.empty(len(shadows))
        for j, sh in enumerate(shadows):
            lo[j], hi[j], est[j], _ = region_volume(xx, sh, env.clo, env.chi, use, math.nan)
        if last:
            return float(np.mean(np.exp(-env.beta * est))) >= u
        if float(np.mean(np.exp(-env.beta * hi))) >= u:
            return True
        if float(np.mean(np.exp(-env.beta * lo))) < u:
            return False
        leaf /= 4


def _recursive_sample(region: Region, boundary: np.ndarray, env: _Env, gen) -> np.ndarray:
    """Exact draw from the area-interaction law on ``region`` given ``boundary``.

    Recursive lexicographic thinning: each dominating point is kept iff its
    mark is at most ``exp(-beta e)``, where ``e`` is its local energy against
    the boundary, the points kept so far and an exact draw on the part of
    the region after it.  The random numbers consumed depend only on the
    dominating draws, never on kept/rejected decisions, which makes the map
    monotone in the boundary.
    """
    pts = region.poisson(env.z, gen)
    marks = gen.random(len(pts))
    kept = []
    for y, u in zip(pts, marks):
        current = np.vstack([boundary] + kept) if kept else boundary
        later = _recursive_sample(region.beyond(y), current, env, gen)
        shadow = _near(np.vstack([current, later]) if len(later) else current, y)
        if u <= 0 or _energy_at_most(y, shadow, env, -math.log(u) / env.beta):
            kept.append(y.reshape(1, -1))
    if not kept:
        return np.empty((0, region.d))
    return np.vstack(kept)


def _rejection_sample(region: Region, boundary: np.ndarray, env: _Env, gen) -> np.ndarray:
    """Exact draw on ``region`` given ``boundary`` by rejection (not monotone)."""
    d = region.d
    shadow = np.vstack([env.shadow, boundary]) if len(boundary) else env.shadow
    flat, counts, attempts, ok = _sampling.rejection_batch(
        region.window.lo, region.window.hi, region.after, region.boxes_array(),
        region.centers_array(), region.excluded_radius**2, shadow, env.clo,
        env.chi, env.z, env.beta, env.leaf, 1, 10**6, kernel_seed(gen),
    )
    if not ok:
        raise SamplerError("oracle draw exhausted its attempts", 0.0)
    return flat


def _oracle_draws(x, region, boundary, env, gen, budget, oracle) -> list:
    draw = _recursive_sample if oracle == "recursive" else _rejection_sample
    shadows = []
    for _ in range(budget):
        later = draw(region, boundary, env, gen)
        full = np.vstack([boundary, later]) if len(later) else boundary
        shadows.append(_near(full, x))
    return shadows


def thinning_probability(
    x,
    kept,
    remaining_region: Region,
    bc: BoundaryCondition,
    params: ModelParams,
    oracle_budget: int = 200,
    rng=None,
    oracle: str = "recursive",
) -> tuple:
    """Estimate the probability of keeping ``x`` given the points already kept.

    Averages ``exp(-beta e(x; gamma, kept, bc))`` over ``oracle_budget``
    exact draws ``gamma`` on ``remaining_region`` with boundary ``kept``.
    Returns ``(estimate, standard error)``.
    """
    window = remaining_region.window
    p = as_point(x, window.d)
    if params.beta == 0:
        return 1.0, 0.0
    env = _Env(window, bc, params)
    if env.beta == 0:
        return 1.0, 0.0
    gen = as_generator(rng)
    boundary = np.vstack([env.shadow, as_points(kept, window.d)])
    shadows = _oracle_draws(p, remaining_region, boundary, env, gen, oracle_budget, oracle)
    weights = np.array([
        math.exp(-env.beta * region_volume(p.reshape(1, -1), sh, env.clo, env.chi, env.leaf, math.nan)[2])
        for sh in shadows
    ])
    err = weights.std(ddof=1) / math.sqrt(len(weights)) if len(weights) > 1 else float("nan")
    return float(weights.mean()), float(err)


def _thin_copy(region: Region, env: _Env, boundary: list, copy: MarkedConfiguration,
               target, oracle_budget: int, oracle: str) -> np.ndarray:
    """Thin one marked copy over ``region``; return the kept points in ``target``.

    The copy is swept in lexicographic order up to its last point inside
    ``target`` (a callable returning a mask).  ``boundary`` lists point arrays
    that shadow every decision.
    """
    d = region.d
    inside = region.contains(copy.points) if len(copy) else np.zeros(0, bool)
    copy = copy.subset(inside)
    order = np.lexsort(copy.points.T[::-1]) if len(copy) > 1 else np.arange(len(copy))
    pts, marks, keys = copy.points[order], copy.marks[order], copy.keys[order]
    in_target = target(pts) if len(pts) else np.zeros(0, bool)
    if not np.any(in_target):
        return np.empty((0, d))
    stop = int(np.nonzero(in_target)[0][-1]) + 1
    kept = []
    mine = []
    for j in range(stop):
        y, u = pts[j], marks[j]
        if env.beta == 0:
            keep = True
        else:
            current = np.vstack(boundary + kept)
            shadows = _oracle_draws(
                y, region.beyond(y), current, env, key_generator(keys[j]),
                oracle_budget, oracle,
            )
            keep = _mean_weight_at_least(y, shadows, env, u)
        if keep:
            kept.append(y.reshape(1, -1))
            if in_target[j]:
                mine.append(y.reshape(1, -1))
    return np.vstack(mine) if mine else np.empty((0, d))


def thin_region(
    region: Region,
    bc: BoundaryCondition,
    params: ModelParams,
    marked: MarkedConfiguration,
    target=None,
    oracle_budget: int = 1,
    oracle: str = "recursive",
) -> np.ndarray:
    """Exact draw from the area-interaction law on ``region`` by thinning ``marked``.

    ``marked`` must dominate: a Poisson(z) marked configuration covering the
    region.  Only the kept points inside ``target`` (default: the region)
    are returned; the sweep stops after the last dominating point there.
    Monotone in ``marked`` and in the boundary points of ``bc``.
    """
    env = _Env(region.window, bc, params)
    if target is None:
        target = region.contains
    elif isinstance(target, Window):
        target = target.contains
    return _thin_copy(region, env, [env.shadow], marked, target, oracle_budget, oracle)


def sample_by_thinning(
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    cube_order: Sequence[Window],
    marked: Sequence[MarkedConfiguration],
    oracle_budget: int = 1,
    oracle: str = "recursive",
) -> Configuration:
    """Sequential thinning of a marked tuple, cube by cube.

    For cube ``i`` the ``i``-th marked copy, restricted to the window minus the
    cubes already treated, is swept in lexicographic order up to its last
    point inside the cube.  A point ``x`` with mark ``u`` is kept iff the
    estimated thinning probability is at least ``u``; only the kept points
    inside the cube are retained.  The estimate averages ``oracle_budget``
    exact draws after ``x``, seeded by the point's key, so the output is a
    deterministic function of the inputs.  With ``oracle="recursive"`` the
    map is monotone in the marked tuple and in the boundary.
    """
    if len(marked) != len(cube_order):
        raise ValueError("need one marked copy per cube")
    d = window.d
    env = _Env(window, bc, params)
    out = [env.shadow]
    for i, cube in enumerate(cube_order):
        region = Region(window, tuple(cube_order[:i]))
        mine = _thin_copy(region, env, out, marked[i], cube.contains, oracle_budget, oracle)
        if len(mine):
            out.append(mine)
    pts = np.vstack(out[1:]) if len(out) > 1 else np.empty((0, d))
    return Configuration(pts, d)

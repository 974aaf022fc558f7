"""Bicolor Widom-Rowlinson pairs, the continuum random-cluster model and its coloring.

Two colors are compatible when no cross pair is within distance 1 (their
radius-1/2 balls are disjoint).  The first marginal of the bicolor model at
activities ``(z1, z2)`` on a window is the area model with ``beta = z2`` and
the Hamiltonian clipped to that window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _crcm
from .geometry import Configuration, Window, as_points
from .model import BoundaryCondition
from .percolation import ClusterLabeling, crossing, label_clusters
from .rng import as_generator, kernel_seed
from .samplers import MIN_SWEEP, Region

#: Kissing number in dimensions 1 to 3.
KISSING_NUMBER = {1: 2, 2: 6, 3: 12}

#: Boundary condition whose first-marginal law matches the bicolor model on
#: the window: unit balls are measured inside the window itself.
WINDOW_CLIPPED = BoundaryCondition.wired(margin=0.0)


@dataclass
class BicolorConfiguration:
    omega1: Configuration
    omega2: Configuration

    def min_cross_distance(self) -> float:
        a, b = self.omega1.points, self.omega2.points
        if len(a) == 0 or len(b) == 0:
            return math.inf
        return float(np.sqrt(np.min(np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2))))

    def is_valid(self) -> bool:
        """No cross pair within distance 1."""
        return self.min_cross_distance() > 1.0

    def swapped(self) -> "BicolorConfiguration":
        return BicolorConfiguration(self.omega2, self.omega1)


def sample_bicolor_from_area(area_cfg, window: Window, z2: float, rng=None) -> BicolorConfiguration:
    """Add a second color: Poisson(z2) on ``window`` outside the closed unit balls of ``area_cfg``.

    If ``area_cfg`` follows the window-clipped area model with ``beta = z2``
    the pair follows the bicolor model at ``(z, z2)``.
    """
    if z2 < 0:
        raise ValueError("z2 must be >= 0")
    rng = as_generator(rng)
    d = window.d
    first = area_cfg if isinstance(area_cfg, Configuration) else Configuration(area_cfg, d)
    if z2 == 0:
        second = np.empty((0, d))
    else:
        region = Region(window, excluded_centers=first.points, excluded_radius=1.0)
        second = region.poisson(z2, rng)
    pair = BicolorConfiguration(first, Configuration(second, d))
    if not pair.is_valid():
        raise AssertionError("bicolor pair violates the exclusion")
    return pair


# ---------------------------------------------------------------------------
# continuum random-cluster model


@dataclass
class CrcmState:
    """A configuration with its labeling at radius 1/2 and its component count."""

    cfg: Configuration
    labeling: ClusterLabeling
    n_cc: int

    @classmethod
    def of(cls, cfg: Configuration) -> "CrcmState":
        lab = label_clusters(cfg, 0.5)
        return cls(cfg, lab, lab.n_components)

    def consistent(self) -> bool:
        return self.n_cc == label_clusters(self.cfg, 0.5).n_components

    def bounds_hold(self) -> bool:
        """``#ω (1 - c_d) <= N_cc <= #ω`` with ``c_d`` the kissing number."""
        n = len(self.cfg)
        return n * (1 - KISSING_NUMBER[self.cfg.d]) <= self.n_cc <= n


@dataclass
class CrcmRun:
    states: list
    proposals: int
    accepted: int
    checks: int
    mismatches: int


def crcm_weight_ratio_birth(z: float, delta_ncc: int) -> float:
    """``π(ω + x) / π(ω)`` for the weight ``z^n 2^{N_cc}``."""
    return z * 2.0**delta_ncc


def sample_crcm_chain(window: Window, z: float, n_samples: int, rng=None,
                      burn_in_sweeps: float = 50, thin_sweeps: float = 5,
                      init=None, check_every: int = 100) -> CrcmRun:
    """States of one chain for the weight ``z^n 2^{N_cc}`` (free boundary).

    Births at uniform ``x`` are accepted with probability
    ``min(1, z |W| 2^{ΔN} / (n + 1))`` where ``ΔN = 1 - k`` and ``k`` is the
    number of clusters the new ball touches; deaths with
    ``min(1, n 2^{ΔN} / (z |W|))`` where ``ΔN + 1`` is the number of pieces
    the point's cluster falls into.  Every ``check_every``-th proposal the
    incremental ``ΔN`` is compared with a full relabeling.
    """
    if z <= 0:
        raise ValueError("z must be positive")
    rng = as_generator(rng)
    d = window.d
    sweep = max(MIN_SWEEP, int(math.ceil(z * window.volume)))
    burn = max(1, int(round(burn_in_sweeps * sweep)))
    thin = max(1, int(round(thin_sweeps * sweep)))
    start = as_points(init, d).copy() if init is not None else np.empty((0, d))
    flat, counts, comps, proposals, accepted, checks, bad = _crcm.crcm_run(
        start, window.lo, window.hi, float(z), burn, thin, int(n_samples),
        int(check_every), kernel_seed(rng),
    )
    states = []
    at = 0
    for c, k in zip(counts, comps):
        cfg = Configuration(flat[at : at + c], d)
        at += c
        lab = label_clusters(cfg, 0.5)
        states.append(CrcmState(cfg, lab, int(k)))
    return CrcmRun(states, int(proposals), int(accepted), int(checks), int(bad))


def sample_crcm_mcmc(window: Window, z: float, sweeps: float = 50, rng=None, init=None) -> CrcmState:
    """Final state of a chain run for ``sweeps`` sweeps."""
    return sample_crcm_chain(window, z, 1, rng, burn_in_sweeps=sweeps, init=init).states[0]


def crcm_count_oracle(window: Window, z: float, max_points: int = 10,
                      quadrature_points: int = 4096, rng=None) -> np.ndarray:
    """Count law of the weight ``z^n 2^{N_cc}`` by Monte Carlo quadrature.

    ``P(n) ∝ (z^n / n!) ∫_{W^n} 2^{N_cc} dx``; the integral is
    ``|W|^n E[2^{N_cc}]`` over uniform placements.
    """
    rng = as_generator(rng)
    logs = np.empty(max_points + 1)
    for n in range(max_points + 1):
        if n == 0:
            mean = 1.0
        else:
            vals = np.empty(quadrature_points)
            for q in range(quadrature_points):
                pts = window.sample_uniform(rng, n)
                vals[q] = 2.0 ** _crcm.count_components(pts)
            mean = float(vals.mean())
        logs[n] = n * math.log(z * window.volume) - math.lgamma(n + 1) + math.log(mean)
    w = np.exp(logs - logs.max())
    return w / w.sum()


def fk_color(state: CrcmState, rng=None) -> BicolorConfiguration:
    """Color each 1/2-cluster 1 or 2 with probability 1/2, independently."""
    rng = as_generator(rng)
    cfg = state.cfg
    d = cfg.d
    if len(cfg) == 0:
        empty = Configuration.empty(d)
        return BicolorConfiguration(empty, empty)
    first = rng.random(state.labeling.n_components) < 0.5
    mask = first[state.labeling.labels]
    pts = state.labeling.points
    pair = BicolorConfiguration(Configuration(pts[mask], d), Configuration(pts[~mask], d))
    if not pair.is_valid():
        raise AssertionError("colored clusters violate the exclusion")
    return pair


# ---------------------------------------------------------------------------
# thinned measure


@dataclass
class ThinnedRow:
    z: float
    raw_crossing: float
    thinned_crossing: float
    raw_stderr: float
    thinned_stderr: float
    removed_fraction: float
    replicates: int


def boundary_clusters(state: CrcmState, window: Window) -> np.ndarray:
    """Mask of points whose 1/2-cluster has a ball meeting the window's surface."""
    if len(state.cfg) == 0:
        return np.zeros(0, dtype=bool)
    pts = state.labeling.points
    hit = window.boundary_distance(pts) <= 0.5
    touching = np.zeros(state.labeling.n_components, dtype=bool)
    touching[state.labeling.labels[hit]] = True
    return touching[state.labeling.labels]


def thinned_measure_experiment(window: Window, zs, r: float, sweeps: float = 50,
                               replicates: int = 200, rng=None) -> list:
    """Crossing of ``window`` by r-balls before and after removing boundary clusters.

    The clusters of radius-1/2 balls touching the window's surface stand in
    for the infinite cluster.  Thinning only removes points, so the thinned
    crossing never exceeds the raw one on any sample.
    """
    if r <= 0.5:
        raise ValueError("r must exceed 1/2")
    rng = as_generator(rng)
    rows = []
    for z, g in zip(np.atleast_1d(zs), rng.spawn(len(np.atleast_1d(zs)))):
        raw, thin, removed = [], [], []
        for gg in g.spawn(int(math.ceil(replicates / 50))):
            take = min(50, replicates - len(raw))
            run = sample_crcm_chain(window, float(z), take, gg, burn_in_sweeps=sweeps)
            for st in run.states:
                mask = boundary_clusters(st, window)
                pts = st.labeling.points
                kept = pts[~mask] if len(pts) else pts
                a = crossing(pts, r, window) if len(pts) else False
                b = crossing(kept, r, window) if len(kept) else False
                if b and not a:
                    raise AssertionError("thinning created a crossing")
                raw.append(a)
                thin.append(b)
                removed.append(mask.mean() if len(mask) else 0.0)
        m = len(raw)
        pr, pt = float(np.mean(raw)), float(np.mean(thin))
        rows.append(ThinnedRow(
            float(z), pr, pt, math.sqrt(pr * (1 - pr) / m), math.sqrt(pt * (1 - pt) / m),
            float(np.mean(removed)), m,
        ))
    return rows

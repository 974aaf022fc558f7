"""Couplings of two boundary conditions and the uniqueness diagnostic.

The monotone coupling thins one dominating marked configuration under both
boundary conditions.  The disagreement coupling peels the window in rounds:
each round resamples both configurations on what is left, keeps them only
within distance 2 of the newest points of the larger configuration, and
continues on the rest, so any disagreement is chained to the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _clusters
from .geometry import Configuration, Window, as_points
from .model import FREE, BoundaryCondition, ModelParams
from .percolation import DecayFit, closed_box, fit_decay
from .rng import as_generator
from .samplers import (
    Region,
    marked_poisson,
    marked_tuple,
    sample_by_thinning,
    sample_mcmc_chain,
    thin_region,
)

#: Range of the disagreement zone around the larger boundary.
REACH = 2.0


class CouplingError(AssertionError):
    """A coupling invariant failed, or the round cap was hit."""

    def __init__(self, message: str, rounds=None):
        super().__init__(message)
        self.rounds = rounds or []


@dataclass
class CouplingRound:
    """One peeling round: the points generating the zone and what was kept."""

    centers: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray


@dataclass
class CoupledPair:
    """Two nested configurations on ``window`` and the rounds that built them."""

    window: Window
    xi1: Configuration
    xi2: Configuration
    boundary1: np.ndarray
    boundary2: np.ndarray
    rounds: list = field(default_factory=list)

    @property
    def disagreement(self) -> Configuration:
        return self.xi2.difference(self.xi1)

    def nested(self) -> bool:
        return self.xi1.issubset(self.xi2)

    def disagreement_connected(self) -> bool:
        """Every point of ``xi2 \\ xi1`` is 1-connected to the boundary through ``xi2``."""
        dis = self.disagreement.points
        if len(dis) == 0:
            return True
        if len(self.boundary2) == 0:
            return False
        pts = np.ascontiguousarray(np.vstack([self.boundary2, self.xi2.points]))
        _, _, labels = _clusters.label(pts, 2.0)
        grounded = np.zeros(len(pts), dtype=bool)
        grounded[labels[: len(self.boundary2)]] = True
        idx = _row_index(pts[len(self.boundary2):], dis)
        return bool(np.all(grounded[labels[len(self.boundary2) + idx]]))

    def round_of(self, points) -> np.ndarray:
        """Index of the peeling zone containing each point (``len(rounds)``: terminal)."""
        p = as_points(points, self.window.d)
        out = np.full(len(p), len(self.rounds), dtype=np.int64)
        for k in range(len(self.rounds) - 1, -1, -1):
            c = self.rounds[k].centers
            if len(c):
                d2 = np.sum((p[:, None, :] - c[None, :, :]) ** 2, axis=2)
                out[np.any(d2 <= REACH**2, axis=1)] = k
        return out


def _row_index(rows: np.ndarray, wanted: np.ndarray) -> np.ndarray:
    lookup = {r.tobytes(): i for i, r in enumerate(rows)}
    return np.array([lookup[w.tobytes()] for w in wanted], dtype=np.int64)


def _boundary_points(bc: BoundaryCondition, window: Window) -> np.ndarray:
    if bc.kind == "free":
        return np.empty((0, window.d))
    if bc.kind != "explicit":
        raise ValueError("couplings need free or explicit boundary conditions")
    return bc.shadow(window)


def _check_nested_boundaries(b1: np.ndarray, b2: np.ndarray):
    theirs = {p.tobytes() for p in b2}
    if not all(p.tobytes() in theirs for p in b1):
        raise ValueError("boundary 1 must be a subset of boundary 2")


def monotone_coupling(window: Window, bc1: BoundaryCondition, bc2: BoundaryCondition,
                      params: ModelParams, rng=None, cube_order=None, marked=None,
                      oracle_budget: int = 1) -> CoupledPair:
    """Thin one marked tuple under both boundaries; ``xi1 ⊆ xi2`` on every draw.

    The thinning oracle is seeded by the per-point keys, so both runs share
    all randomness.  Only the marginals are guaranteed, not the disagreement
    structure.
    """
    b1 = _boundary_points(bc1, window)
    b2 = _boundary_points(bc2, window)
    _check_nested_boundaries(b1, b2)
    cubes = [window] if cube_order is None else list(cube_order)
    if marked is None:
        marked = marked_tuple(window, params.z, len(cubes), as_generator(rng))
    xi1 = sample_by_thinning(window, bc1, params, cubes, marked, oracle_budget)
    xi2 = sample_by_thinning(window, bc2, params, cubes, marked, oracle_budget)
    pair = CoupledPair(window, xi1, xi2, b1, b2)
    if not pair.nested():
        raise CouplingError("monotone coupling produced xi1 not contained in xi2")
    return pair


def disagreement_coupling(window: Window, bc1: BoundaryCondition, bc2: BoundaryCondition,
                          params: ModelParams, rng=None, max_rounds: int = 10**4,
                          oracle_budget: int = 1) -> CoupledPair:
    """Coupling in which every disagreement point is chained to the boundary.

    Round k works on ``R_k``, the window minus the closed 2-balls around all
    earlier zone generators.  Its zone ``Γ_k`` is the part of ``R_k`` within
    distance 2 of the newest generators (first the boundary points of
    ``bc2``, then the ``xi2`` points kept in the previous round).  Both
    configurations are drawn on ``R_k`` from one marked Poisson sample,
    given their boundary and everything kept so far, and only their
    restrictions to ``Γ_k`` are kept.  Once a round keeps no ``xi2`` point
    the rest of the window is farther than 2 from every fixed point, so one
    common draw with empty boundary finishes both.
    """
    rng = as_generator(rng)
    d = window.d
    b1 = _boundary_points(bc1, window)
    b2 = _boundary_points(bc2, window)
    _check_nested_boundaries(b1, b2)
    fixed1, fixed2 = [b1], [b2]
    old = np.empty((0, d))
    new = b2
    rounds = []
    while len(new):
        if len(rounds) >= max_rounds:
            raise CouplingError(f"round cap {max_rounds} exceeded", rounds)
        region = Region(window, excluded_centers=old, excluded_radius=REACH)
        centers = new

        def zone(p, centers=centers, region=region):
            d2 = np.sum((p[:, None, :] - centers[None, :, :]) ** 2, axis=2)
            return region.contains(p) & np.any(d2 <= REACH**2, axis=1)

        marked = marked_poisson(window, params.z, rng)
        x2 = thin_region(region, BoundaryCondition.explicit(np.vstack(fixed2), d), params,
                         marked, zone, oracle_budget)
        x1 = thin_region(region, BoundaryCondition.explicit(np.vstack(fixed1), d), params,
                         marked, zone, oracle_budget)
        rounds.append(CouplingRound(centers, x1, x2))
        if not Configuration(x1, d).issubset(Configuration(x2, d)):
            raise CouplingError(f"round {len(rounds)}: xi1 not contained in xi2", rounds)
        fixed1.append(x1)
        fixed2.append(x2)
        old = np.vstack([old, centers])
        new = x2
    region = Region(window, excluded_centers=old, excluded_radius=REACH)
    rest = thin_region(region, FREE, params, marked_poisson(window, params.z, rng),
                       oracle_budget=oracle_budget)
    xi1 = Configuration(np.vstack(fixed1[1:] + [rest]), d)
    xi2 = Configuration(np.vstack(fixed2[1:] + [rest]), d)
    pair = CoupledPair(window, xi1, xi2, b1, b2, rounds)
    if not pair.nested():
        raise CouplingError("xi1 not contained in xi2", rounds)
    if not pair.disagreement_connected():
        raise CouplingError("a disagreement point is not connected to the boundary", rounds)
    return pair


# ---------------------------------------------------------------------------
# uniqueness diagnostic


def saturated_shell(n: float, d: int = 2, spacing: float = 0.5) -> np.ndarray:
    """Grid points of the given spacing in ``Λ_{n+1}`` outside the closed box ``Λ_n``."""
    ticks = np.arange(-n - 1, n + 1 + spacing / 2, spacing)
    grid = np.array(np.meshgrid(*([ticks] * d), indexing="ij")).reshape(d, -1).T
    return grid[np.abs(grid).max(axis=1) > n]


def _reaches_inner(points, shell, inner: float) -> bool:
    """Some 1-cluster of ``points ∪ shell`` holds a shell point and meets ``Λ_inner``."""
    if len(points) == 0:
        return False
    pts = np.ascontiguousarray(np.vstack([shell, points]))
    _, _, labels = _clusters.label(pts, 2.0)
    grounded = np.zeros(len(pts), dtype=bool)
    grounded[labels[: len(shell)]] = True
    near = closed_box(inner, pts.shape[1]).distance(points) <= 1.0
    return bool(np.any(grounded[labels[len(shell):]] & near))


@dataclass
class UniquenessCurve:
    """Probability that the boundary's influence reaches ``Λ_inner``, per ``n``."""

    ns: np.ndarray
    probability: np.ndarray
    stderr: np.ndarray
    method: str
    replicates: int

    def fit(self) -> DecayFit:
        return fit_decay(self.ns, self.probability, self.stderr)


def uniqueness_diagnostic(n_list, params: ModelParams, replicates: int, rng=None,
                          inner: float = 1.0, method: str = "bound") -> UniquenessCurve:
    """Reach of the boundary's influence into ``Λ_inner`` as ``n`` grows.

    The boundary is a saturated shell of spacing 1/2 in ``Λ_{n+1} \\ Λ_n``
    (for ``bc2``) against the empty boundary (``bc1``).  ``method="coupling"``
    runs the disagreement coupling and records whether a disagreement point's
    unit ball meets ``Λ_inner``.  ``method="bound"`` samples the larger
    configuration alone and records whether ``Λ_inner`` is 1-connected to the
    shell through its unit balls, which dominates the coupling event.
    """
    rng = as_generator(rng)
    ns = np.asarray(list(n_list), dtype=float)
    if np.any(ns <= inner):
        raise ValueError("every n must exceed the inner box size")
    probs, errs = [], []
    for n, g in zip(ns, rng.spawn(len(ns))):
        window = Window.box(n, params.d)
        shell = saturated_shell(n, params.d)
        bc2 = BoundaryCondition.explicit(shell, params.d)
        if method == "coupling":
            hits = []
            for gg in g.spawn(replicates):
                pair = disagreement_coupling(window, FREE, bc2, params, gg)
                dis = pair.disagreement.points
                hits.append(len(dis) > 0 and bool(np.any(closed_box(inner, params.d).distance(dis) <= 1.0)))
        elif method == "bound":
            samples = []
            for gg in g.spawn(int(math.ceil(replicates / 50))):
                samples.extend(sample_mcmc_chain(window, bc2, params, min(50, replicates - len(samples)), gg))
            hits = [_reaches_inner(c.points, shell, inner) for c in samples]
        else:
            raise ValueError(f"unknown method {method!r}")
        p = float(np.mean(hits))
        probs.append(p)
        errs.append(math.sqrt(max(p * (1 - p), 1.0 / replicates) / replicates))
    return UniquenessCurve(ns, np.array(probs), np.array(errs), method, replicates)

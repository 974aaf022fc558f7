"""Area-interaction Hamiltonian, specification densities and Papangelou intensity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats
from scipy.stats import qmc

from ._volume import batch_volume, region_volume
from .geometry import (
    LEAF_DIAMETER,
    Configuration,
    Window,
    as_point,
    as_points,
    unit_ball_volume,
)


@dataclass(frozen=True)
class ModelParams:
    """Activity ``z``, inverse temperature ``beta``, dimension and connection radius."""

    z: float
    beta: float
    d: int = 2
    r: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.z) and self.z > 0):
            raise ValueError(f"z must be > 0, got {self.z}")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if not (math.isfinite(self.r) and self.r > 0):
            raise ValueError(f"r must be > 0, got {self.r}")

    @property
    def v_d(self) -> float:
        return unit_ball_volume(self.d)

    def with_(self, **changes) -> "ModelParams":
        values = {"z": self.z, "beta": self.beta, "d": self.d, "r": self.r}
        values.update(changes)
        return ModelParams(**values)


@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    """Free, wired (clipped Hamiltonian) or explicit outside configuration.

    ``wired`` clips the Hamiltonian to the window shrunk by ``margin`` (1 for
    the usual wired measure on ``Λ_n``, which clips to ``Λ_{n-1}``).  An
    explicit boundary stores outside points; only those within distance 2 of
    the window can shadow a unit ball centred inside it.
    """

    kind: str
    points: np.ndarray = field(default=None, repr=False)
    margin: float = 1.0

    def __post_init__(self):
        if self.kind not in ("free", "wired", "explicit"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")

    @classmethod
    def free(cls) -> "BoundaryCondition":
        return cls("free")

    @classmethod
    def wired(cls, margin: float = 1.0) -> "BoundaryCondition":
        return cls("wired", margin=float(margin))

    @classmethod
    def explicit(cls, points, d: int = 2) -> "BoundaryCondition":
        pts = as_points(points, d).copy()
        pts.setflags(write=False)
        return cls("explicit", points=pts)

    def clip(self, window: Window) -> Window | None:
        if self.kind == "wired":
            return window.shrink(self.margin)
        return None

    def shadow(self, window: Window) -> np.ndarray:
        if self.kind != "explicit" or len(self.points) == 0:
            return np.empty((0, window.d))
        return self.points[window.distance(self.points) <= 2.0]

    def environment(self, window: Window):
        """``(shadow points, clip_lo, clip_hi, empty)`` used by the kernels.

        ``empty`` is True when a wired clip leaves nothing to measure.
        """
        d = window.d
        if self.kind == "wired":
            clip = self.clip(window)
            if clip is None:
                return np.empty((0, d)), np.zeros(d), np.zeros(d), True
            return np.empty((0, d)), clip.lo, clip.hi, False
        return self.shadow(window), np.full(d, -np.inf), np.full(d, np.inf), False


FREE = BoundaryCondition.free()


def _check_inside(points: np.ndarray, window: Window):
    if len(points) and not np.all(window.contains(points)):
        raise ValueError("configuration has points outside the window")


def hamiltonian(
    cfg, window: Window, bc: BoundaryCondition = FREE, leaf: float | None = None
) -> float:
    """Volume of the unit balls around ``cfg`` not already covered by the boundary.

    Free: whole union; explicit: union minus the boundary balls; wired: union
    clipped to the shrunk window.
    """
    pts = as_points(cfg, window.d)
    _check_inside(pts, window)
    shadow, lo, hi, empty = bc.environment(window)
    if empty or len(pts) == 0:
        return 0.0
    leaf = LEAF_DIAMETER[window.d] if leaf is None else leaf
    return region_volume(pts, shadow, lo, hi, leaf, math.nan)[2]


def local_energy(
    x, cfg, window: Window, bc: BoundaryCondition = FREE, leaf: float | None = None
) -> float:
    """Volume added to the Hamiltonian by inserting ``x`` into ``cfg``."""
    p = as_point(x, window.d)
    pts = as_points(cfg, window.d)
    shadow, lo, hi, empty = bc.environment(window)
    if empty:
        return 0.0
    if len(pts):
        near = pts[np.sum((pts - p) ** 2, axis=1) <= 4.0]
        shadow = np.vstack([shadow, near]) if len(shadow) else near
    leaf = LEAF_DIAMETER[window.d] if leaf is None else leaf
    return region_volume(p.reshape(1, -1), shadow, lo, hi, leaf, math.nan)[2]


def papangelou(
    x,
    cfg,
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    leaf: float | None = None,
) -> float:
    """Conditional intensity ``z * exp(-beta * local_energy)``."""
    p = as_point(x, window.d)
    if not window.contains(p.reshape(1, -1))[0]:
        raise ValueError("x must lie in the window")
    if params.beta == 0:
        return params.z
    return params.z * math.exp(-params.beta * local_energy(p, cfg, window, bc, leaf))


def log_unnormalized_density(
    cfg, window: Window, bc: BoundaryCondition, params: ModelParams
) -> float:
    """``#cfg * ln z - beta * H`` (density with respect to the unit Poisson process)."""
    pts = as_points(cfg, window.d)
    n = len(pts)
    if n == 0:
        return 0.0
    energy = 0.0 if params.beta == 0 else hamiltonian(pts, window, bc)
    return n * math.log(params.z) - params.beta * energy


class TruncationError(ValueError):
    """The count cut-off of the partition oracle leaves too much Poisson mass."""


@dataclass(frozen=True)
class PartitionEstimate:
    """Partition function with respect to the unit Poisson process on the window.

    ``terms[k]`` is the contribution of configurations with ``k`` points.
    """

    value: float
    stderr: float
    terms: np.ndarray
    term_stderr: np.ndarray
    volume: float

    @property
    def normalized(self) -> float:
        """Same quantity with the empty configuration weighted 1."""
        return self.value * math.exp(self.volume)

    @property
    def normalized_stderr(self) -> float:
        return self.stderr * math.exp(self.volume)

    def count_probabilities(self) -> np.ndarray:
        return self.terms / self.value


def partition_oracle(
    window: Window,
    bc: BoundaryCondition,
    params: ModelParams,
    max_points: int = 12,
    quadrature_points: int = 1024,
    seed: int = 0,
    scrambles: int = 8,
    leaf: float = 4e-3,
) -> PartitionEstimate:
    """Brute-force partition function for tiny windows.

    For each count ``k`` the mean of ``exp(-beta H)`` over ``k`` uniform
    points is estimated with scrambled Sobol placements; the spread over
    independent scrambles gives the standard error.  Counts with small
    Poisson weight get proportionally fewer placements (at least 1/64).
    """
    vol = window.volume
    lam = params.z * vol
    tail = stats.poisson.sf(max_points, lam)
    if tail >= 1e-8:
        raise TruncationError(
            f"Poisson mass above max_points={max_points} is {tail:.3g} >= 1e-8"
        )
    d = window.d
    shadow, lo, hi, empty = bc.environment(window)
    pmf = stats.poisson.pmf(np.arange(max_points + 1), lam)
    share = np.clip(pmf / pmf.max(), 1 / 64, 1.0)
    seeds = np.random.SeedSequence(seed).spawn(max_points + 1)
    terms = np.zeros(max_points + 1)
    errs = np.zeros(max_points + 1)
    for k in range(max_points + 1):
        log_weight = -vol + k * math.log(lam) - special.gammaln(k + 1)
        if k == 0 or params.beta == 0 or empty:
            terms[k] = math.exp(log_weight)
            continue
        per_scramble = max(2, int(quadrature_points * share[k]) // scrambles)
        m = int(math.ceil(math.log2(per_scramble)))
        means = np.empty(scrambles)
        for j, sub in enumerate(seeds[k].spawn(scrambles)):
            sobol = qmc.Sobol(d=k * d, scramble=True, seed=np.random.default_rng(sub))
            u = sobol.random_base2(m).reshape(-1, k, d)
            placements = window.lo + u * window.sides
            energy = batch_volume(placements, shadow, lo, hi, leaf)
            means[j] = np.mean(np.exp(-params.beta * energy))
        terms[k] = math.exp(log_weight) * means.mean()
        errs[k] = math.exp(log_weight) * means.std(ddof=1) / math.sqrt(scrambles)
    return PartitionEstimate(
        value=float(terms.sum()),
        stderr=float(math.sqrt(np.sum(errs**2))),
        terms=terms,
        term_stderr=errs,
        volume=vol,
    )

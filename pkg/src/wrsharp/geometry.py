"""Points, boxes, configurations and volumes of unions of unit balls."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ._volume import region_volume

#: Cell side of the configuration hash: twice the interaction radius 1.
GRID_SIDE = 2.0

#: Leaf cell diameter of the subdivision integrator, per dimension.
LEAF_DIAMETER = {2: 1e-3, 3: 2e-2}

_INF = np.inf


def unit_ball_volume(d: int) -> float:
    """Lebesgue volume of the unit ball in dimension ``d``."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def volume_tolerance(d: int) -> float:
    """Declared absolute tolerance of every volume evaluation."""
    return 1e-4 * unit_ball_volume(d)


def as_point(x, d: int | None = None) -> np.ndarray:
    """Validate ``x`` as a finite coordinate vector and return it as floats."""
    p = np.asarray(x, dtype=float).reshape(-1)
    if d is not None and p.shape[0] != d:
        raise ValueError(f"point has dimension {p.shape[0]}, expected {d}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


def as_points(points, d: int) -> np.ndarray:
    """Return ``points`` as a finite ``(n, d)`` float array."""
    if points is None:
        return np.empty((0, d))
    if isinstance(points, Configuration):
        return points.points
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.empty((0, d))
    arr = arr.reshape(-1, d)
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


@dataclass(frozen=True)
class Window:
    """Half-open box ``]lower, upper]``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValueError("lower and upper must have the same length")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("window needs lower[i] < upper[i] for every i")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def box(cls, n: float, d: int = 2) -> "Window":
        """The box ``]-n, n]^d``."""
        return cls((-n,) * d, (n,) * d)

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def sides(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, points) -> np.ndarray:
        """Boolean mask of the points lying in the half-open box."""
        p = as_points(points, self.d)
        return np.all((p > self.lo) & (p <= self.hi), axis=1)

    def shrink(self, margin: float) -> "Window | None":
        """The box with every face moved inwards by ``margin`` (None if empty)."""
        lo = self.lo + margin
        hi = self.hi - margin
        if np.any(hi <= lo):
            return None
        return Window(tuple(lo), tuple(hi))

    def translate(self, shift) -> "Window":
        s = as_point(shift, self.d)
        return Window(tuple(self.lo + s), tuple(self.hi + s))

    def distance(self, points) -> np.ndarray:
        """Euclidean distance from each point to the closed box (0 inside)."""
        p = as_points(points, self.d)
        gap = np.maximum(np.maximum(self.lo - p, p - self.hi), 0.0)
        return np.sqrt(np.sum(gap * gap, axis=1))

    def boundary_distance(self, points) -> np.ndarray:
        """Euclidean distance from each point to the surface of the closed box."""
        p = as_points(points, self.d)
        inside = np.all((p >= self.lo) & (p <= self.hi), axis=1)
        inner = np.min(np.minimum(p - self.lo, self.hi - p), axis=1)
        return np.where(inside, inner, self.distance(p))

    def sample_uniform(self, rng: np.random.Generator, k: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(k, self.d))


def lexicographic_order(points: np.ndarray) -> np.ndarray:
    """Stable permutation sorting rows lexicographically (first coordinate first)."""
    if len(points) == 0:
        return np.empty(0, dtype=np.int64)
    return np.lexsort(points.T[::-1])


class Configuration:
    """Immutable finite point configuration.

    Points are stored in lexicographic order (ties keep insertion order) and
    indexed by a uniform hash with cells of side :data:`GRID_SIDE`.
    """

    __slots__ = ("_points", "_grid")

    def __init__(self, points=None, d: int = 2):
        arr = as_points(points, d).copy()
        arr = arr[lexicographic_order(arr)]
        arr.setflags(write=False)
        self._points = arr
        self._grid = None

    @classmethod
    def empty(cls, d: int = 2) -> "Configuration":
        return cls(None, d)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def d(self) -> int:
        return self._points.shape[1]

    def __len__(self) -> int:
        return self._points.shape[0]

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self._points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self._points.shape == other._points.shape and bool(
            np.array_equal(self._points, other._points)
        )

    def __hash__(self):
        return hash(self._points.tobytes())

    def __repr__(self) -> str:
        return f"Configuration(n={len(self)}, d={self.d})"

    @staticmethod
    def cell_of(x) -> tuple:
        return tuple(int(v) for v in np.floor(np.asarray(x) / GRID_SIDE))

    @property
    def grid(self) -> dict:
        """Mapping from integer cell index to the point indices in that cell."""
        if self._grid is None:
            grid: dict = {}
            cells = np.floor(self._points / GRID_SIDE).astype(np.int64)
            for i, c in enumerate(map(tuple, cells)):
                grid.setdefault(c, []).append(i)
            self._grid = {c: np.array(v, dtype=np.int64) for c, v in grid.items()}
        return self._grid

    def union(self, other) -> "Configuration":
        other_pts = as_points(other, self.d)
        return Configuration(np.vstack([self._points, other_pts]), self.d)

    def restrict(self, window: Window) -> "Configuration":
        return Configuration(self._points[window.contains(self._points)], self.d)

    def without(self, index: int) -> "Configuration":
        return Configuration(np.delete(self._points, index, axis=0), self.d)

    def issubset(self, other: "Configuration") -> bool:
        """Exact point-set inclusion (coordinates compared bit for bit)."""
        mine = {p.tobytes() for p in self._points}
        theirs = {p.tobytes() for p in other.points}
        return mine <= theirs

    def difference(self, other: "Configuration") -> "Configuration":
        theirs = {p.tobytes() for p in other.points}
        keep = [i for i, p in enumerate(self._points) if p.tobytes() not in theirs]
        return Configuration(self._points[keep], self.d)


def neighbors_within(cfg: Configuration, x, radius: float) -> np.ndarray:
    """Points of ``cfg`` within Euclidean distance ``radius`` of ``x``.

    Rows are returned in the configuration's (lexicographic) order.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    p = as_point(x, cfg.d)
    if len(cfg) == 0:
        return np.empty((0, cfg.d))
    reach = int(math.ceil(radius / GRID_SIDE))
    base = np.floor(p / GRID_SIDE).astype(np.int64)
    grid = cfg.grid
    found = []
    for off in np.ndindex(*(2 * reach + 1,) * cfg.d):
        key = tuple(int(b + o - reach) for b, o in zip(base, off))
        idx = grid.get(key)
        if idx is not None:
            found.append(idx)
    if not found:
        return np.empty((0, cfg.d))
    idx = np.sort(np.concatenate(found))
    pts = cfg.points[idx]
    close = np.sum((pts - p) ** 2, axis=1) <= radius * radius
    return pts[close]


def _clip_arrays(clip: Window | None, d: int):
    if clip is None:
        return np.full(d, -_INF), np.full(d, _INF)
    return clip.lo, clip.hi


def _leaf(d: int, leaf: float | None) -> float:
    return LEAF_DIAMETER[d] if leaf is None else float(leaf)


def uncovered_ball_volume(
    x, cfg, clip: Window | None = None, leaf: float | None = None
) -> float:
    """Volume of ``B_1(x)`` not covered by the unit balls around ``cfg``.

    ``cfg`` may be a :class:`Configuration` or an array of points.  With
    ``clip`` the uncovered region is intersected with that box.
    """
    p = as_point(x)
    d = p.shape[0]
    if isinstance(cfg, Configuration):
        shadow = neighbors_within(cfg, p, 2.0) if len(cfg) else np.empty((0, d))
    else:
        shadow = as_points(cfg, d)
    lo, hi = _clip_arrays(clip, d)
    return region_volume(p.reshape(1, d), shadow, lo, hi, _leaf(d, leaf), math.nan)[2]


def union_volume(
    cfg, region: Window | None = None, leaf: float | None = None
) -> float:
    """Volume of ``B_1(cfg)`` intersected with ``region`` (whole space if None)."""
    if isinstance(cfg, Configuration):
        pts, d = cfg.points, cfg.d
    else:
        d = region.d if region is not None else np.asarray(cfg).shape[-1]
        pts = as_points(cfg, d)
    lo, hi = _clip_arrays(region, d)
    return region_volume(pts, np.empty((0, d)), lo, hi, _leaf(d, leaf), math.nan)[2]


def shadowed_union_volume(
    points, shadow, clip: Window | None = None, leaf: float | None = None
) -> float:
    """Volume of ``B_1(points)`` minus ``B_1(shadow)``, optionally clipped."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = pts.shape[1]
    sh = as_points(shadow, d)
    lo, hi = _clip_arrays(clip, d)
    return region_volume(pts, sh, lo, hi, _leaf(d, leaf), math.nan)[2]


def cube_partition(window: Window, per_side: int | Sequence[int]) -> list:
    """Split ``window`` into equal sub-boxes, listed in lexicographic order of centers."""
    counts = np.broadcast_to(np.asarray(per_side, dtype=int), (window.d,))
    step = window.sides / counts
    cubes = []
    for idx in np.ndindex(*counts):
        lo = window.lo + step * np.array(idx)
        cubes.append(Window(tuple(lo), tuple(lo + step)))
    return cubes

"""Compiled exploration of the r-clusters hanging off a box surface."""

import heapq
import math

import numpy as np
from numba import njit

from ._clusters import find


@njit(cache=True)
def cube_coords(idx, dims, out):
    for k in range(dims.shape[0] - 1, -1, -1):
        out[k] = idx % dims[k]
        idx //= dims[k]


@njit(cache=True)
def cube_index(p, lo, eps, dims):
    """Flat index of the half-open cube containing ``p`` (-1 outside the grid)."""
    idx = 0
    for k in range(p.shape[0]):
        c = int(math.ceil((p[k] - lo[k]) / eps)) - 1
        if c < 0 or c >= dims[k]:
            return -1
        idx = idx * dims[k] + c
    return idx


@njit(cache=True)
def _box_gap2(p, lo, eps, coords):
    s = 0.0
    for k in range(p.shape[0]):
        a = lo[k] + eps * coords[k]
        b = a + eps
        g = 0.0
        if p[k] < a:
            g = a - p[k]
        elif p[k] > b:
            g = p[k] - b
        s += g * g
    return s


@njit(cache=True)
def cubes_near(p, radius, lo, eps, dims, out):
    """Write the flat indices of cubes within ``radius`` of ``p``; returns the count."""
    d = p.shape[0]
    base = np.empty(d, dtype=np.int64)
    span = np.empty(d, dtype=np.int64)
    total = 1
    for k in range(d):
        a = int(math.floor((p[k] - radius - lo[k]) / eps))
        b = int(math.floor((p[k] + radius - lo[k]) / eps))
        a = max(a, 0)
        b = min(b, dims[k] - 1)
        if b < a:
            return 0
        base[k] = a
        span[k] = b - a + 1
        total *= span[k]
    coords = np.empty(d, dtype=np.int64)
    m = 0
    r2 = radius * radius
    for combo in range(total):
        rem = combo
        for k in range(d - 1, -1, -1):
            coords[k] = base[k] + rem % span[k]
            rem //= span[k]
        if _box_gap2(p, lo, eps, coords) <= r2:
            idx = 0
            for k in range(d):
                idx = idx * dims[k] + coords[k]
            out[m] = idx
            m += 1
    return m


@njit(cache=True)
def explore(pts, start, lo, eps, dims, frontier, allowed, touch_s, touch_0, touch_n, r):
    """Run the exploration on points bucketed by cube.

    ``pts[start[c]:start[c+1]]`` are the points of cube ``c``; the flags give,
    per point, whether its ball meets ``∂Λ_s``, the origin and ``∂Λ_n``.
    Returns ``(visited cube order, f)``.
    """
    t = frontier.shape[0]
    d = lo.shape[0]
    visited = np.zeros(t, dtype=np.bool_)
    queued = np.zeros(t, dtype=np.bool_)
    order = np.empty(t, dtype=np.int64)
    steps = 0
    heap = [np.int64(0)]
    heap.pop()
    for c in range(t):
        if frontier[c] and allowed[c]:
            heapq.heappush(heap, np.int64(c))
            queued[c] = True

    npts = pts.shape[0]
    parent = np.arange(npts)
    fs = touch_s.copy()
    f0 = touch_0.copy()
    fn = touch_n.copy()
    revealed = np.zeros(npts, dtype=np.bool_)
    spawned = np.zeros(npts, dtype=np.bool_)
    near = np.empty(t, dtype=np.int64)
    coords = np.empty(d, dtype=np.int64)
    two_r2 = 4.0 * r * r

    while len(heap) > 0:
        c = heapq.heappop(heap)
        visited[c] = True
        order[steps] = c
        steps += 1
        for i in range(start[c], start[c + 1]):
            revealed[i] = True
            # merge with revealed neighbours
            m = cubes_near(pts[i], 2.0 * r, lo, eps, dims, near)
            for q in range(m):
                cc = near[q]
                if not visited[cc]:
                    continue
                for j in range(start[cc], start[cc + 1]):
                    if j == i or not revealed[j]:
                        continue
                    s = 0.0
                    for k in range(d):
                        g = pts[i, k] - pts[j, k]
                        s += g * g
                    if s <= two_r2:
                        ri = find(parent, i)
                        rj = find(parent, j)
                        if ri != rj:
                            parent[rj] = ri
                            fs[ri] = fs[ri] or fs[rj]
                            f0[ri] = f0[ri] or f0[rj]
                            fn[ri] = fn[ri] or fn[rj]
            root = find(parent, i)
            if f0[root] and fn[root]:
                return order[:steps], 1
            if fs[root]:
                # every revealed point of an active cluster queues its neighbourhood
                for j in range(npts):
                    if revealed[j] and not spawned[j] and find(parent, j) == root:
                        spawned[j] = True
                        m = cubes_near(pts[j], 2.0 * r, lo, eps, dims, near)
                        for q in range(m):
                            cc = near[q]
                            if allowed[cc] and not queued[cc]:
                                queued[cc] = True
                                heapq.heappush(heap, cc)
    return order[:steps], 0


@njit(cache=True)
def mark_near(pts, mask, radius, lo, eps, dims, out):
    """Set ``out[c]`` for every cube within ``radius`` of a masked point."""
    near = np.empty(out.shape[0], dtype=np.int64)
    for i in range(pts.shape[0]):
        if mask[i]:
            m = cubes_near(pts[i], radius, lo, eps, dims, near)
            for q in range(m):
                out[near[q]] = True

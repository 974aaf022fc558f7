"""Union-find labeling of r-connected clusters on a uniform grid."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(cache=True)
def union(parent, rank, a, b):
    ra = find(parent, a)
    rb = find(parent, b)
    if ra == rb:
        return ra
    if rank[ra] < rank[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    if rank[ra] == rank[rb]:
        rank[ra] += 1
    return ra


@njit(cache=True)
def _grid(points, side):
    """Sort points by cell of side ``side``; returns (order, sorted keys, coords, dims)."""
    n, d = points.shape
    origin = np.empty(d)
    dims = np.empty(d, dtype=np.int64)
    for k in range(d):
        lo = points[0, k]
        hi = points[0, k]
        for i in range(1, n):
            lo = min(lo, points[i, k])
            hi = max(hi, points[i, k])
        origin[k] = lo
        dims[k] = int(math.floor((hi - lo) / side)) + 1
    coords = np.empty((n, d), dtype=np.int64)
    keys = np.empty(n, dtype=np.int64)
    for i in range(n):
        key = 0
        for k in range(d):
            c = int(math.floor((points[i, k] - origin[k]) / side))
            if c >= dims[k]:
                c = dims[k] - 1
            coords[i, k] = c
            key = key * dims[k] + c
        keys[i] = key
    order = np.argsort(keys, kind="mergesort")
    return order, keys[order], coords, dims


@njit(cache=True)
def neighbor_pairs(points, radius):
    """All index pairs ``i < j`` with ``|x_i - x_j| <= radius``."""
    n, d = points.shape
    out = np.empty((max(16, 4 * n), 2), dtype=np.int64)
    m = 0
    if n < 2:
        return out[:0]
    order, skeys, coords, dims = _grid(points, radius)
    r2 = radius * radius
    total = 1
    for k in range(d):
        total *= 3
    offs = np.empty(d, dtype=np.int64)
    for i in range(n):
        for combo in range(total):
            rem = combo
            for k in range(d - 1, -1, -1):
                offs[k] = rem % 3 - 1
                rem //= 3
            key = 0
            valid = True
            for k in range(d):
                c = coords[i, k] + offs[k]
                if c < 0 or c >= dims[k]:
                    valid = False
                    break
                key = key * dims[k] + c
            if not valid:
                continue
            lo = np.searchsorted(skeys, key)
            hi = np.searchsorted(skeys, key, side="right")
            for t in range(lo, hi):
                j = order[t]
                if j <= i:
                    continue
                s = 0.0
                for k in range(d):
                    q = points[i, k] - points[j, k]
                    s += q * q
                if s <= r2:
                    if m >= out.shape[0]:
                        grown = np.empty((2 * out.shape[0], 2), dtype=np.int64)
                        grown[:m] = out[:m]
                        out = grown
                    out[m, 0] = i
                    out[m, 1] = j
                    m += 1
    return out[:m]


@njit(cache=True)
def label(points, radius):
    """Union-find over edges ``|x - y| <= radius``.

    Returns ``(parent, rank, labels)`` with labels numbered by first
    appearance in point order.
    """
    n = points.shape[0]
    parent = np.arange(n)
    rank = np.zeros(n, dtype=np.int64)
    pairs = neighbor_pairs(points, radius)
    for t in range(pairs.shape[0]):
        union(parent, rank, pairs[t, 0], pairs[t, 1])
    labels = np.empty(n, dtype=np.int64)
    remap = np.full(n, -1, dtype=np.int64)
    k = 0
    for i in range(n):
        root = find(parent, i)
        if remap[root] < 0:
            remap[root] = k
            k += 1
        labels[i] = remap[root]
    return parent, rank, labels


@njit(cache=True)
def critical_marks(points, marks, radius, touch_a, touch_b):
    """Smallest mark level at which a cluster touching A also touches B.

    Points are switched on in increasing mark order; returns ``inf`` if the
    full configuration never connects A and B.
    """
    n = points.shape[0]
    if n == 0:
        return np.inf
    pairs = neighbor_pairs(points, radius)
    deg = np.zeros(n + 1, dtype=np.int64)
    for t in range(pairs.shape[0]):
        deg[pairs[t, 0] + 1] += 1
        deg[pairs[t, 1] + 1] += 1
    for i in range(n):
        deg[i + 1] += deg[i]
    adj = np.empty(deg[n], dtype=np.int64)
    fill = deg[:n].copy()
    for t in range(pairs.shape[0]):
        a = pairs[t, 0]
        b = pairs[t, 1]
        adj[fill[a]] = b
        fill[a] += 1
        adj[fill[b]] = a
        fill[b] += 1
    parent = np.arange(n)
    rank = np.zeros(n, dtype=np.int64)
    fa = touch_a.copy()
    fb = touch_b.copy()
    active = np.zeros(n, dtype=np.bool_)
    order = np.argsort(marks)
    for t in range(n):
        i = order[t]
        active[i] = True
        ha = fa[i]
        hb = fb[i]
        for q in range(deg[i], deg[i + 1]):
            j = adj[q]
            if active[j]:
                rj = find(parent, j)
                ha = ha or fa[rj]
                hb = hb or fb[rj]
                union(parent, rank, i, j)
        root = find(parent, i)
        fa[root] = ha
        fb[root] = hb
        if ha and hb:
            return marks[i]
    return np.inf


@njit(cache=True)
def cluster_mask(points, radius, seeds):
    """Mask of the points whose cluster contains at least one seed point."""
    n = points.shape[0]
    mask = np.zeros(n, dtype=np.bool_)
    if n == 0:
        return mask
    parent, rank, labels = label(points, radius)
    hit = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        if seeds[i]:
            hit[labels[i]] = True
    for i in range(n):
        mask[i] = hit[labels[i]]
    return mask

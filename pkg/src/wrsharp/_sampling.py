"""Compiled inner loops of the samplers.

The kernels use numba's own generator, seeded from a numpy Generator by the
callers, so every call is reproducible from its seed.
"""

import math

import numpy as np
from numba import njit

from ._volume import region_volume


@njit(cache=True)
def _in_region(p, after, ex_boxes, ex_balls, ex_r2):
    if p[0] <= after:
        return False
    d = p.shape[0]
    for b in range(ex_boxes.shape[0]):
        inside = True
        for k in range(d):
            if not (ex_boxes[b, k] < p[k] <= ex_boxes[b, d + k]):
                inside = False
                break
        if inside:
            return False
    for b in range(ex_balls.shape[0]):
        s = 0.0
        for k in range(d):
            q = ex_balls[b, k] - p[k]
            s += q * q
        if s <= ex_r2:
            return False
    return True


@njit(cache=True)
def region_poisson(lo, hi, after, ex_boxes, ex_balls, ex_r2, z):
    """Poisson(z) points in ``]lo, hi]`` restricted to first coordinate > after,
    outside the excluded boxes and outside the closed excluded balls."""
    d = lo.shape[0]
    blo = lo.copy()
    if after > blo[0]:
        blo[0] = after
    vol = 1.0
    for k in range(d):
        if hi[k] <= blo[k]:
            return np.empty((0, d))
        vol *= hi[k] - blo[k]
    m = np.random.poisson(z * vol)
    out = np.empty((m, d))
    p = np.empty(d)
    kept = 0
    for i in range(m):
        for k in range(d):
            p[k] = blo[k] + (hi[k] - blo[k]) * np.random.random()
        if _in_region(p, after, ex_boxes, ex_balls, ex_r2):
            out[kept] = p
            kept += 1
    return out[:kept]


@njit(cache=True)
def seed_kernel(seed):
    np.random.seed(seed)


@njit(cache=True)
def rejection_batch(
    lo, hi, after, ex_boxes, ex_balls, ex_r2, shadow, clip_lo, clip_hi,
    z, beta, leaf, nsamples, max_attempts, seed,
):
    """Exact draws by rejection from the Poisson(z) proposal.

    A proposal is accepted when ``beta * H <= E`` with ``E ~ Exp(1)``, i.e.
    with probability ``exp(-beta H)``.  Returns ``(flat points, counts,
    attempts, ok)``; ``ok`` is False if some draw exhausted ``max_attempts``.
    """
    np.random.seed(seed)
    d = lo.shape[0]
    flat = np.empty((64, d))
    used = 0
    counts = np.zeros(nsamples, dtype=np.int64)
    attempts = 0
    for s in range(nsamples):
        accepted = False
        for a in range(max_attempts):
            pts = region_poisson(lo, hi, after, ex_boxes, ex_balls, ex_r2, z)
            attempts += 1
            if beta == 0.0 or pts.shape[0] == 0:
                accepted = True
            else:
                thr = np.random.exponential() / beta
                accepted = region_volume(pts, shadow, clip_lo, clip_hi, leaf, thr)[3] == 1
            if accepted:
                k = pts.shape[0]
                if used + k > flat.shape[0]:
                    grown = np.empty((2 * (used + k), d))
                    grown[:used] = flat[:used]
                    flat = grown
                flat[used : used + k] = pts
                used += k
                counts[s] = k
                break
        if not accepted:
            return flat[:used], counts[:s], attempts, False
    return flat[:used], counts, attempts, True


# ---------------------------------------------------------------------------
# birth-death chain


@njit(cache=True)
def _cell_index(p, g0, dims):
    idx = 0
    for k in range(p.shape[0]):
        c = int(math.floor((p[k] - g0[k]) / 2.0))
        if c < 0:
            c = 0
        elif c >= dims[k]:
            c = dims[k] - 1
        idx = idx * dims[k] + c
    return idx


@njit(cache=True)
def _cell_coords(idx, dims, out):
    for k in range(dims.shape[0] - 1, -1, -1):
        out[k] = idx % dims[k]
        idx //= dims[k]


@njit(cache=True)
def _unlink(j, prv, nxt, head, cellof):
    if prv[j] >= 0:
        nxt[prv[j]] = nxt[j]
    else:
        head[cellof[j]] = nxt[j]
    if nxt[j] >= 0:
        prv[nxt[j]] = prv[j]


@njit(cache=True)
def _link(j, c, prv, nxt, head, cellof):
    cellof[j] = c
    nxt[j] = head[c]
    prv[j] = -1
    if head[c] >= 0:
        prv[head[c]] = j
    head[c] = j


@njit(cache=True)
def _gather(x, skip, pts, cellof, head, nxt, sh_pts, sh_start, g0, dims, buf, coords, off):
    """Copy state and static points within distance 2 of ``x`` into ``buf``."""
    d = x.shape[0]
    c = _cell_index(x, g0, dims)
    _cell_coords(c, dims, coords)
    m = 0
    total = 1
    for k in range(d):
        total *= 3
    for combo in range(total):
        rem = combo
        idx = 0
        valid = True
        for k in range(d - 1, -1, -1):
            off[k] = rem % 3 - 1
            rem //= 3
        for k in range(d):
            ck = coords[k] + off[k]
            if ck < 0 or ck >= dims[k]:
                valid = False
                break
            idx = idx * dims[k] + ck
        if not valid:
            continue
        j = head[idx]
        while j >= 0:
            if j != skip:
                s = 0.0
                for k in range(d):
                    q = pts[j, k] - x[k]
                    s += q * q
                if s <= 4.0:
                    if m >= buf.shape[0]:
                        return -1
                    buf[m] = pts[j]
                    m += 1
            j = nxt[j]
        for t in range(sh_start[idx], sh_start[idx + 1]):
            s = 0.0
            for k in range(d):
                q = sh_pts[t, k] - x[k]
                s += q * q
            if s <= 4.0:
                if m >= buf.shape[0]:
                    return -1
                buf[m] = sh_pts[t]
                m += 1
    return m


@njit(cache=True)
def mcmc_run(
    init, lo, hi, shadow, clip_lo, clip_hi, z, beta, leaf,
    burn, thin, nsamples, seed,
):
    """Birth-death Metropolis-Hastings chain for the area specification.

    Runs ``burn`` proposals, records the state, then records again after
    every further ``thin`` proposals until ``nsamples`` states are stored.
    Returns ``(flat samples, counts, proposals, acceptances)``.
    """
    np.random.seed(seed)
    d = lo.shape[0]
    vol = 1.0
    g0 = np.empty(d)
    dims = np.empty(d, dtype=np.int64)
    ncells = 1
    for k in range(d):
        vol *= hi[k] - lo[k]
        g0[k] = lo[k] - 2.0
        dims[k] = int(math.floor((hi[k] + 2.0 - g0[k]) / 2.0)) + 1
        ncells *= dims[k]

    # static shadow points in CSR layout over the same cells
    sh_cell = np.empty(shadow.shape[0], dtype=np.int64)
    sh_start = np.zeros(ncells + 1, dtype=np.int64)
    for t in range(shadow.shape[0]):
        sh_cell[t] = _cell_index(shadow[t], g0, dims)
        sh_start[sh_cell[t] + 1] += 1
    for c in range(ncells):
        sh_start[c + 1] += sh_start[c]
    order = np.argsort(sh_cell, kind="mergesort")
    sh_pts = np.empty((shadow.shape[0], d))
    for t in range(shadow.shape[0]):
        sh_pts[t] = shadow[order[t]]

    cap = max(64, 2 * init.shape[0] + 16)
    pts = np.empty((cap, d))
    cellof = np.empty(cap, dtype=np.int64)
    nxt = np.empty(cap, dtype=np.int64)
    prv = np.empty(cap, dtype=np.int64)
    head = np.full(ncells, -1, dtype=np.int64)
    n = 0
    for i in range(init.shape[0]):
        pts[n] = init[i]
        _link(n, _cell_index(init[i], g0, dims), prv, nxt, head, cellof)
        n += 1

    buf = np.empty((256, d))
    xx = np.empty((1, d))
    coords = np.empty(d, dtype=np.int64)
    off = np.empty(d, dtype=np.int64)
    flat = np.empty((max(64, nsamples * (init.shape[0] + 4)), d))
    used = 0
    counts = np.zeros(nsamples, dtype=np.int64)
    proposals = 0
    accepted = 0
    log_zv = math.log(z * vol)

    for sample in range(nsamples):
        steps = burn if sample == 0 else thin
        for step in range(steps):
            proposals += 1
            if np.random.random() < 0.5:
                for k in range(d):
                    xx[0, k] = lo[k] + (hi[k] - lo[k]) * np.random.random()
                u = np.random.random()
                if beta == 0.0:
                    ok = u * (n + 1) < z * vol
                else:
                    thr = (log_zv - math.log(n + 1) - math.log(u)) / beta
                    m = _gather(xx[0], -1, pts, cellof, head, nxt, sh_pts, sh_start, g0, dims, buf, coords, off)
                    while m < 0:
                        buf = np.empty((2 * buf.shape[0], d))
                        m = _gather(xx[0], -1, pts, cellof, head, nxt, sh_pts, sh_start, g0, dims, buf, coords, off)
                    ok = region_volume(xx, buf[:m], clip_lo, clip_hi, leaf, thr)[3] == 1
                if ok:
                    if n == cap:
                        cap *= 2
                        grown = np.empty((cap, d))
                        grown[:n] = pts[:n]
                        pts = grown
                        g_cell = np.empty(cap, dtype=np.int64)
                        g_cell[:n] = cellof[:n]
                        cellof = g_cell
                        g_nxt = np.empty(cap, dtype=np.int64)
                        g_nxt[:n] = nxt[:n]
                        nxt = g_nxt
                        g_prv = np.empty(cap, dtype=np.int64)
                        g_prv[:n] = prv[:n]
                        prv = g_prv
                    pts[n] = xx[0]
                    _link(n, _cell_index(xx[0], g0, dims), prv, nxt, head, cellof)
                    n += 1
                    accepted += 1
            else:
                if n == 0:
                    continue
                i = int(np.random.random() * n)
                if i >= n:
                    i = n - 1
                u = np.random.random()
                if beta == 0.0:
                    ok = u * z * vol < n
                else:
                    for k in range(d):
                        xx[0, k] = pts[i, k]
                    thr = (log_zv + math.log(u) - math.log(n)) / beta
                    m = _gather(xx[0], i, pts, cellof, head, nxt, sh_pts, sh_start, g0, dims, buf, coords, off)
                    while m < 0:
                        buf = np.empty((2 * buf.shape[0], d))
                        m = _gather(xx[0], i, pts, cellof, head, nxt, sh_pts, sh_start, g0, dims, buf, coords, off)
                    ok = region_volume(xx, buf[:m], clip_lo, clip_hi, leaf, thr)[3] == 0
                if ok:
                    # unlink i, then move the last point into slot i
                    _unlink(i, prv, nxt, head, cellof)
                    last = n - 1
                    if i != last:
                        _unlink(last, prv, nxt, head, cellof)
                        pts[i] = pts[last]
                        _link(i, cellof[last], prv, nxt, head, cellof)
                    n -= 1
                    accepted += 1
        if used + n > flat.shape[0]:
            grown = np.empty((2 * (used + n), d))
            grown[:used] = flat[:used]
            flat = grown
        flat[used : used + n] = pts[:n]
        used += n
        counts[sample] = n
    return flat[:used], counts, proposals, accepted

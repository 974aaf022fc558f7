"""Compiled birth-death chain for the continuum random-cluster model.

Points are adjacent when their balls of radius 1/2 overlap (distance <= 1).
"""

import math

import numpy as np
from numba import njit

from ._clusters import label


@njit(cache=True)
def _cell(p, lo, dims):
    idx = 0
    for k in range(p.shape[0]):
        c = int(math.floor(p[k] - lo[k]))
        if c < 0:
            c = 0
        elif c >= dims[k]:
            c = dims[k] - 1
        idx = idx * dims[k] + c
    return idx


@njit(cache=True)
def _link(j, c, prv, nxt, head, cellof):
    cellof[j] = c
    nxt[j] = head[c]
    prv[j] = -1
    if head[c] >= 0:
        prv[head[c]] = j
    head[c] = j


@njit(cache=True)
def _unlink(j, prv, nxt, head, cellof):
    if prv[j] >= 0:
        nxt[prv[j]] = nxt[j]
    else:
        head[cellof[j]] = nxt[j]
    if nxt[j] >= 0:
        prv[nxt[j]] = prv[j]


@njit(cache=True)
def _neighbors(x, skip, pts, head, nxt, lo, dims, out):
    """Indices of points within distance 1 of ``x`` (excluding ``skip``)."""
    d = x.shape[0]
    base = np.empty(d, dtype=np.int64)
    rem_c = _cell(x, lo, dims)
    for k in range(d - 1, -1, -1):
        base[k] = rem_c % dims[k]
        rem_c //= dims[k]
    total = 1
    for k in range(d):
        total *= 3
    m = 0
    offs = np.empty(d, dtype=np.int64)
    for combo in range(total):
        rem = combo
        idx = 0
        valid = True
        for k in range(d - 1, -1, -1):
            offs[k] = rem % 3 - 1
            rem //= 3
        for k in range(d):
            c = base[k] + offs[k]
            if c < 0 or c >= dims[k]:
                valid = False
                break
            idx = idx * dims[k] + c
        if not valid:
            continue
        j = head[idx]
        while j >= 0:
            if j != skip:
                s = 0.0
                for k in range(d):
                    q = pts[j, k] - x[k]
                    s += q * q
                if s <= 1.0:
                    out[m] = j
                    m += 1
            j = nxt[j]
    return m


@njit(cache=True)
def _components_among(nb, m, skip, pts, head, nxt, lo, dims, stamp, epoch, queue, buf):
    """Number of distinct clusters (of the state minus ``skip``) among ``nb[:m]``."""
    comps = 0
    for a in range(m):
        j = nb[a]
        if stamp[j] == epoch:
            continue
        comps += 1
        stamp[j] = epoch
        qh = 0
        qt = 0
        queue[qt] = j
        qt += 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            k = _neighbors(pts[u], skip, pts, head, nxt, lo, dims, buf)
            for b in range(k):
                v = buf[b]
                if stamp[v] != epoch:
                    stamp[v] = epoch
                    queue[qt] = v
                    qt += 1
    return comps


@njit(cache=True)
def count_components(points):
    if points.shape[0] == 0:
        return 0
    _, _, labels = label(points, 1.0)
    return labels.max() + 1


@njit(cache=True)
def crcm_run(init, lo, hi, z, burn, thin, nsamples, check_every, seed):
    """Metropolis birth-death chain with weight ``z^n 2^{N_cc}``.

    Returns ``(flat samples, counts, component counts, proposals, accepted,
    checks, mismatches)``; every ``check_every``-th proposal compares the
    incremental component count with a full relabeling.
    """
    np.random.seed(seed)
    d = lo.shape[0]
    vol = 1.0
    dims = np.empty(d, dtype=np.int64)
    ncells = 1
    for k in range(d):
        vol *= hi[k] - lo[k]
        dims[k] = int(math.floor(hi[k] - lo[k])) + 1
        ncells *= dims[k]
    cap = max(64, 2 * init.shape[0] + 16)
    pts = np.empty((cap, d))
    cellof = np.empty(cap, dtype=np.int64)
    nxt = np.empty(cap, dtype=np.int64)
    prv = np.empty(cap, dtype=np.int64)
    stamp = np.zeros(cap + 1, dtype=np.int64)
    queue = np.empty(cap + 1, dtype=np.int64)
    nb = np.empty(cap + 1, dtype=np.int64)
    buf = np.empty(cap + 1, dtype=np.int64)
    head = np.full(ncells, -1, dtype=np.int64)
    n = 0
    for i in range(init.shape[0]):
        pts[n] = init[i]
        _link(n, _cell(init[i], lo, dims), prv, nxt, head, cellof)
        n += 1
    ncc = count_components(pts[:n])
    epoch = 0
    x = np.empty(d)
    flat = np.empty((max(64, nsamples * (init.shape[0] + 4)), d))
    used = 0
    counts = np.zeros(nsamples, dtype=np.int64)
    comps = np.zeros(nsamples, dtype=np.int64)
    proposals = 0
    accepted = 0
    checks = 0
    mismatches = 0
    for sample in range(nsamples):
        steps = burn if sample == 0 else thin
        for step in range(steps):
            proposals += 1
            check = check_every > 0 and proposals % check_every == 0
            if np.random.random() < 0.5:
                for k in range(d):
                    x[k] = lo[k] + (hi[k] - lo[k]) * np.random.random()
                m = _neighbors(x, -1, pts, head, nxt, lo, dims, nb)
                epoch += 1
                c = _components_among(nb, m, -1, pts, head, nxt, lo, dims, stamp, epoch, queue, buf)
                dn = 1 - c
                if check:
                    checks += 1
                    trial = np.empty((n + 1, d))
                    trial[:n] = pts[:n]
                    trial[n] = x
                    if count_components(pts[:n]) != ncc or count_components(trial) != ncc + dn:
                        mismatches += 1
                u = np.random.random()
                if u * (n + 1) < z * vol * 2.0**dn:
                    if n == cap:
                        cap *= 2
                        g = np.empty((cap, d))
                        g[:n] = pts[:n]
                        pts = g
                        gi = np.empty(cap, dtype=np.int64)
                        gi[:n] = cellof[:n]
                        cellof = gi
                        gi = np.empty(cap, dtype=np.int64)
                        gi[:n] = nxt[:n]
                        nxt = gi
                        gi = np.empty(cap, dtype=np.int64)
                        gi[:n] = prv[:n]
                        prv = gi
                        stamp = np.zeros(cap + 1, dtype=np.int64)
                        epoch = 0
                        queue = np.empty(cap + 1, dtype=np.int64)
                        nb = np.empty(cap + 1, dtype=np.int64)
                        buf = np.empty(cap + 1, dtype=np.int64)
                    pts[n] = x
                    _link(n, _cell(x, lo, dims), prv, nxt, head, cellof)
                    n += 1
                    ncc += dn
                    accepted += 1
            else:
                if n == 0:
                    continue
                i = int(np.random.random() * n)
                if i >= n:
                    i = n - 1
                m = _neighbors(pts[i], i, pts, head, nxt, lo, dims, nb)
                epoch += 1
                c = _components_among(nb, m, i, pts, head, nxt, lo, dims, stamp, epoch, queue, buf)
                dn = c - 1
                if check:
                    checks += 1
                    trial = np.empty((n - 1, d))
                    trial[:i] = pts[:i]
                    trial[i:] = pts[i + 1 : n]
                    if count_components(pts[:n]) != ncc or count_components(trial) != ncc + dn:
                        mismatches += 1
                u = np.random.random()
                if u * z * vol < n * 2.0**dn:
                    _unlink(i, prv, nxt, head, cellof)
                    last = n - 1
                    if i != last:
                        _unlink(last, prv, nxt, head, cellof)
                        pts[i] = pts[last]
                        _link(i, cellof[last], prv, nxt, head, cellof)
                    n -= 1
                    ncc += dn
                    accepted += 1
        if used + n > flat.shape[0]:
            g = np.empty((2 * (used + n), d))
            g[:used] = flat[:used]
            flat = g
        flat[used : used + n] = pts[:n]
        used += n
        counts[sample] = n
        comps[sample] = ncc
    return flat[:used], counts, comps, proposals, accepted, checks, mismatches

"""Subdivision integrator for volumes of unions of unit balls.

The region measured is ``(B_1(points) minus B_1(shadow)) ∩ clip``.  The root
box is split into ``2^d`` children level by level.  Each cell is classified
against the candidate balls that can still reach it:

* inside some shadow ball, or outside every point ball: contributes nothing;
* inside some point ball and away from every shadow ball: fully counted;
* otherwise the cell is undecided and split again.

After every level the counted volume is a lower bound and counted plus
undecided volume an upper bound.  At the last level undecided cells are
classified by their midpoint.  With a threshold the routine stops as soon as
the bounds decide ``volume <= threshold``; the decision always coincides with
the one the full-depth midpoint estimate would give, because bounds shrink
monotonically around that estimate.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _grow_int(arr, need):
    if need <= arr.shape[0]:
        return arr
    size = arr.shape[0] * 2
    while size < need:
        size *= 2
    out = np.empty(size, dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@njit(cache=True, inline="always")
def _box_dist2(pts, i, cells, c, side):
    mn = 0.0
    mx = 0.0
    for k in range(side.shape[0]):
        a = cells[c, k] - pts[i, k]
        b = pts[i, k] - cells[c, k] - side[k]
        if a > 0.0:
            mn += a * a
        elif b > 0.0:
            mn += b * b
        if a * a > b * b:
            mx += a * a
        else:
            mx += b * b
    return mn, mx


@njit(cache=True)
def region_volume(points, shadow, clip_lo, clip_hi, leaf, threshold):
    """Return ``(lo, hi, est, decision)`` for the region volume.

    ``decision`` is 1 when the volume is at most ``threshold``, 0 when it is
    larger and -1 when ``threshold`` is NaN (no decision requested).
    """
    d = clip_lo.shape[0]
    npts = points.shape[0]
    want = not math.isnan(threshold)
    if npts == 0:
        if want:
            return 0.0, 0.0, 0.0, 1 if 0.0 <= threshold else 0
        return 0.0, 0.0, 0.0, -1

    root_lo = np.empty(d)
    side = np.empty(d)
    diam2 = 0.0
    for k in range(d):
        a = points[0, k]
        b = points[0, k]
        for i in range(1, npts):
            if points[i, k] < a:
                a = points[i, k]
            if points[i, k] > b:
                b = points[i, k]
        lo_k = max(a - 1.0, clip_lo[k])
        hi_k = min(b + 1.0, clip_hi[k])
        if hi_k <= lo_k:
            if want:
                return 0.0, 0.0, 0.0, 1 if 0.0 <= threshold else 0
            return 0.0, 0.0, 0.0, -1
        root_lo[k] = lo_k
        side[k] = hi_k - lo_k
        diam2 += side[k] * side[k]
    diam = math.sqrt(diam2)
    nlev = 0
    if diam > leaf:
        nlev = int(math.ceil(math.log2(diam / leaf)))

    # candidate pools shared by sibling cells
    pool_p = np.empty(max(64, npts), dtype=np.int64)
    pool_s = np.empty(max(64, shadow.shape[0] + 1), dtype=np.int64)
    np_used = 0
    ns_used = 0
    root = root_lo.reshape((1, d))
    for i in range(npts):
        mn, mx = _box_dist2(points, i, root, 0, side)
        if mn <= 1.0:
            pool_p[np_used] = i
            np_used += 1
    for j in range(shadow.shape[0]):
        mn, mx = _box_dist2(shadow, j, root, 0, side)
        if mn <= 1.0:
            pool_s[ns_used] = j
            ns_used += 1

    cell_lo = np.empty((1, d))
    cell_lo[0] = root_lo
    c_poff = np.zeros(1, dtype=np.int64)
    c_plen = np.full(1, np_used, dtype=np.int64)
    c_soff = np.zeros(1, dtype=np.int64)
    c_slen = np.full(1, ns_used, dtype=np.int64)
    c_in = np.zeros(1, dtype=np.bool_)
    ncell = 1

    tmp_p = np.empty(npts, dtype=np.int64)
    tmp_s = np.empty(shadow.shape[0] + 1, dtype=np.int64)
    nchild = 1 << d
    mid = np.empty(d)
    certain = 0.0
    est_extra = 0.0
    und_last = 0.0

    for level in range(nlev + 1):
        last = level == nlev
        vol = 1.0
        for k in range(d):
            vol *= side[k]
        n_lo = np.empty((0 if last else ncell * nchild, d))
        n_poff = np.empty(n_lo.shape[0], dtype=np.int64)
        n_plen = np.empty(n_lo.shape[0], dtype=np.int64)
        n_soff = np.empty(n_lo.shape[0], dtype=np.int64)
        n_slen = np.empty(n_lo.shape[0], dtype=np.int64)
        n_in = np.empty(n_lo.shape[0], dtype=np.bool_)
        n_next = 0
        pushed = 0.0
        half = side * 0.5
        for c in range(ncell):
            covered = False
            ks = 0
            for t in range(c_slen[c]):
                j = pool_s[c_soff[c] + t]
                mn, mx = _box_dist2(shadow, j, cell_lo, c, side)
                if mx <= 1.0:
                    covered = True
                    break
                if mn <= 1.0:
                    tmp_s[ks] = j
                    ks += 1
            if covered:
                continue
            inside = c_in[c]
            kp = 0
            if not inside:
                for t in range(c_plen[c]):
                    i = pool_p[c_poff[c] + t]
                    mn, mx = _box_dist2(points, i, cell_lo, c, side)
                    if mx <= 1.0:
                        inside = True
                        break
                    if mn <= 1.0:
                        tmp_p[kp] = i
                        kp += 1
                if not inside and kp == 0:
                    continue
            if inside and ks == 0:
                certain += vol
                continue
            if last:
                und_last += vol
                for k in range(d):
                    mid[k] = cell_lo[c, k] + half[k]
                hit = inside
                if not hit:
                    for t in range(kp):
                        i = tmp_p[t]
                        s = 0.0
                        for k in range(d):
                            q = points[i, k] - mid[k]
                            s += q * q
                        if s <= 1.0:
                            hit = True
                            break
                if hit:
                    for t in range(ks):
                        j = tmp_s[t]
                        s = 0.0
                        for k in range(d):
                            q = shadow[j, k] - mid[k]
                            s += q * q
                        if s <= 1.0:
                            hit = False
                            break
                if hit:
                    est_extra += vol
                continue
            pushed += vol
            if inside:
                kp = 0
            if np_used + kp > pool_p.shape[0]:
                pool_p = _grow_int(pool_p, np_used + kp)
            if ns_used + ks > pool_s.shape[0]:
                pool_s = _grow_int(pool_s, ns_used + ks)
            poff = np_used
            soff = ns_used
            for t in range(kp):
                pool_p[np_used] = tmp_p[t]
                np_used += 1
            for t in range(ks):
                pool_s[ns_used] = tmp_s[t]
                ns_used += 1
            for ch in range(nchild):
                for k in range(d):
                    if (ch >> k) & 1:
                        n_lo[n_next, k] = cell_lo[c, k] + half[k]
                    else:
                        n_lo[n_next, k] = cell_lo[c, k]
                n_poff[n_next] = poff
                n_plen[n_next] = kp
                n_soff[n_next] = soff
                n_slen[n_next] = ks
                n_in[n_next] = inside
                n_next += 1
        if last:
            break
        if want:
            if certain > threshold:
                return certain, certain + pushed, math.nan, 0
            if certain + pushed <= threshold:
                return certain, certain + pushed, math.nan, 1
        if n_next == 0:
            break
        cell_lo = n_lo
        c_poff = n_poff
        c_plen = n_plen
        c_soff = n_soff
        c_slen = n_slen
        c_in = n_in
        ncell = n_next
        side = half

    est = certain + est_extra
    if want:
        return certain, certain + und_last, est, 1 if est <= threshold else 0
    return certain, certain + und_last, est, -1


@njit(cache=True)
def batch_volume(placements, shadow, clip_lo, clip_hi, leaf):
    """Midpoint-rule volume for each configuration in ``placements[q]``."""
    out = np.empty(placements.shape[0])
    for q in range(placements.shape[0]):
        out[q] = region_volume(placements[q], shadow, clip_lo, clip_hi, leaf, math.nan)[2]
    return out

"""Numba kernels for tile binning and the forward/backward pixel loops.

Layout: gaussians arrive depth-sorted; binning expands them into
(gaussian, tile) pairs ordered by gaussian, then a counting sort groups the
pairs by tile while preserving depth order inside each tile. The forward
kernel walks each tile's list gaussian-by-gaussian, restricting work per
image row to the exact conic slice q <= q_max, and composites front-to-back
with float64 accumulators. The backward kernel replays the identical
traversal in reverse, reconstructing transmittance by division, and writes
per-(gaussian, tile) partial gradients that the caller merges with a
deterministic bincount, so parallel and sequential execution are bitwise
identical.

Per-pixel early termination records the tile-list position at which the
transmittance was first seen below t_eps ("term"); a gaussian is replayed in
backward iff its position is before that mark, which reproduces the forward's
processed set exactly.
"""

import numpy as np
from numba import njit, prange

TERM_NONE = np.int32(2**30)


@njit(cache=True)
def expand_pairs(tx0, tx1, ty0, ty1, ntx):
    """Emit (gaussian, tile) pairs for every tile a gaussian's box overlaps.

    Pairs come out ordered by gaussian index, i.e. by depth. Empty ranges
    (tx1 < tx0) contribute nothing.
    """
    n = len(tx0)
    total = 0
    for i in range(n):
        w = tx1[i] - tx0[i] + 1
        h = ty1[i] - ty0[i] + 1
        if w > 0 and h > 0:
            total += w * h
    pair_gauss = np.empty(total, np.int64)
    pair_tile = np.empty(total, np.int64)
    ofs = 0
    for i in range(n):
        for ty in range(ty0[i], ty1[i] + 1):
            base = ty * ntx
            for tx in range(tx0[i], tx1[i] + 1):
                pair_gauss[ofs] = i
                pair_tile[ofs] = base + tx
                ofs += 1
    return pair_gauss, pair_tile


@njit(cache=True)
def sort_pairs_by_tile(pair_tile, pair_gauss, ntiles):
    """Counting sort of pairs by tile; stable, so depth order survives.

    Returns (tile_offsets, sorted_gauss): tile t owns
    sorted_gauss[tile_offsets[t] : tile_offsets[t + 1]].
    """
    counts = np.zeros(ntiles + 1, np.int64)
    for i in range(len(pair_tile)):
        counts[pair_tile[i] + 1] += 1
    offsets = np.cumsum(counts)
    cursor = offsets[:-1].copy()
    sorted_gauss = np.empty(len(pair_gauss), np.int64)
    for i in range(len(pair_tile)):
        t = pair_tile[i]
        sorted_gauss[cursor[t]] = pair_gauss[i]
        cursor[t] += 1
    return offsets, sorted_gauss


@njit(cache=True, parallel=True)
def forward_kernel(tile_offsets, sorted_gauss, tile_size, width, height,
                   cx, cy, ca, cb, cc, opac, color, gy0, gy1,
                   bg, t_eps, alpha_max, q_max,
                   out_color, out_trans, out_count, out_term):
    """Front-to-back alpha blending over depth-ordered per-tile lists.

    q is the half quadratic form of the inverse covariance; alpha =
    opacity * exp(-q), clamped to alpha_max. Blending of a pixel stops once
    its transmittance falls below t_eps; the stop position is recorded for
    the backward replay. Colors finish as foreground + background * T.
    """
    ntx = (width + tile_size - 1) // tile_size
    nty = (height + tile_size - 1) // tile_size
    for t in prange(ntx * nty):
        px0 = (t % ntx) * tile_size
        py0 = (t // ntx) * tile_size
        tw = min(tile_size, width - px0)
        th = min(tile_size, height - py0)
        npix = tw * th
        t_loc = np.ones(npix, np.float64)
        c_loc = np.zeros((npix, 3), np.float64)
        n_loc = np.zeros(npix, np.int32)
        term_loc = np.full(npix, TERM_NONE, np.int32)

        lo = tile_offsets[t]
        hi = tile_offsets[t + 1]
        for idx in range(lo, hi):
            g = sorted_gauss[idx]
            pos = np.int32(idx - lo)
            a = ca[g]
            b = cb[g]
            c = cc[g]
            gcx = cx[g]
            gcy = cy[g]
            o = opac[g]
            # image rows covered by the influence box, clipped to the tile
            ry0 = max(py0, int(np.ceil(gy0[g] - 0.5)))
            ry1 = min(py0 + th - 1, int(np.floor(gy1[g] - 0.5)))
            for py in range(ry0, ry1 + 1):
                dy = (py + 0.5) - gcy
                # conic slice: a*dx^2 + 2*b*dy*dx + c*dy^2 - 2*q_max <= 0
                bq = b * dy
                cq = c * dy * dy - 2.0 * q_max
                disc = bq * bq - a * cq
                if disc <= 0.0:
                    continue
                sq = np.sqrt(disc)
                rx0 = max(px0, int(np.ceil(gcx + (-bq - sq) / a - 0.5)))
                rx1 = min(px0 + tw - 1, int(np.floor(gcx + (-bq + sq) / a - 0.5)))
                row = (py - py0) * tw - px0
                for px in range(rx0, rx1 + 1):
                    dx = (px + 0.5) - gcx
                    q = 0.5 * a * dx * dx + bq * dx + 0.5 * c * dy * dy
                    if q > q_max:
                        continue
                    p = row + px
                    if t_loc[p] < t_eps:
                        if term_loc[p] == TERM_NONE:
                            term_loc[p] = pos
                        continue
                    alpha = o * np.exp(-q)
                    if alpha > alpha_max:
                        alpha = alpha_max
                    w = alpha * t_loc[p]
                    c_loc[p, 0] += w * color[g, 0]
                    c_loc[p, 1] += w * color[g, 1]
                    c_loc[p, 2] += w * color[g, 2]
                    t_loc[p] *= 1.0 - alpha
                    n_loc[p] += 1

        for j in range(npix):
            py = py0 + j // tw
            px = px0 + j % tw
            tv = t_loc[j]
            out_color[py, px, 0] = c_loc[j, 0] + bg[0] * tv
            out_color[py, px, 1] = c_loc[j, 1] + bg[1] * tv
            out_color[py, px, 2] = c_loc[j, 2] + bg[2] * tv
            out_trans[py, px] = tv
            out_count[py, px] = n_loc[j]
            out_term[py, px] = term_loc[j]


@njit(cache=True, parallel=True)
def backward_kernel(tile_offsets, sorted_gauss, tile_size, width, height,
                    cx, cy, ca, cb, cc, opac, color, gy0, gy1,
                    bg, t_eps, alpha_max, q_max,
                    trans, term, dl_dpix, pair_grads):
    """Reverse replay of the forward blend; exact adjoint.

    Walks each tile's list back-to-front, rebuilding the pre-blend
    transmittance as T_before = T / (1 - alpha) and keeping the suffix
    accumulator S = sum_{later j} alpha_j T_j (c_j . g) + T_final (bg . g),
    so d alpha_i = T_i (c_i . g) - S_i / (1 - alpha_i). Emits, per
    (gaussian, tile) pair: d center (2), d conic A/B/C (3), d color (3),
    d opacity (1). Gaussians at positions >= the recorded termination mark
    receive nothing, matching the forward skip. Alpha-clamped contributions
    get color gradients only (projection subgradient).
    """
    ntx = (width + tile_size - 1) // tile_size
    nty = (height + tile_size - 1) // tile_size
    for t in prange(ntx * nty):
        px0 = (t % ntx) * tile_size
        py0 = (t // ntx) * tile_size
        tw = min(tile_size, width - px0)
        th = min(tile_size, height - py0)
        npix = tw * th
        t_cur = np.empty(npix, np.float64)
        s_acc = np.empty(npix, np.float64)
        gp = np.empty((npix, 3), np.float64)
        term_loc = np.empty(npix, np.int32)
        for j in range(npix):
            py = py0 + j // tw
            px = px0 + j % tw
            g0 = dl_dpix[py, px, 0]
            g1 = dl_dpix[py, px, 1]
            g2 = dl_dpix[py, px, 2]
            gp[j, 0] = g0
            gp[j, 1] = g1
            gp[j, 2] = g2
            tv = trans[py, px]
            t_cur[j] = tv
            s_acc[j] = tv * (bg[0] * g0 + bg[1] * g1 + bg[2] * g2)
            term_loc[j] = term[py, px]

        lo = tile_offsets[t]
        hi = tile_offsets[t + 1]
        for idx in range(hi - 1, lo - 1, -1):
            g = sorted_gauss[idx]
            pos = np.int32(idx - lo)
            a = ca[g]
            b = cb[g]
            c = cc[g]
            gcx = cx[g]
            gcy = cy[g]
            o = opac[g]
            col0 = color[g, 0]
            col1 = color[g, 1]
            col2 = color[g, 2]
            acc_cx = 0.0
            acc_cy = 0.0
            acc_a = 0.0
            acc_b = 0.0
            acc_c = 0.0
            acc_r = 0.0
            acc_g = 0.0
            acc_bl = 0.0
            acc_o = 0.0
            ry0 = max(py0, int(np.ceil(gy0[g] - 0.5)))
            ry1 = min(py0 + th - 1, int(np.floor(gy1[g] - 0.5)))
            for py in range(ry0, ry1 + 1):
                dy = (py + 0.5) - gcy
                bq = b * dy
                cq = c * dy * dy - 2.0 * q_max
                disc = bq * bq - a * cq
                if disc <= 0.0:
                    continue
                sq = np.sqrt(disc)
                rx0 = max(px0, int(np.ceil(gcx + (-bq - sq) / a - 0.5)))
                rx1 = min(px0 + tw - 1, int(np.floor(gcx + (-bq + sq) / a - 0.5)))
                row = (py - py0) * tw - px0
                for px in range(rx0, rx1 + 1):
                    dx = (px + 0.5) - gcx
                    q = 0.5 * a * dx * dx + bq * dx + 0.5 * c * dy * dy
                    if q > q_max:
                        continue
                    p = row + px
                    if pos >= term_loc[p]:
                        continue
                    gauss = np.exp(-q)
                    alpha_raw = o * gauss
                    alpha = alpha_raw
                    if alpha > alpha_max:
                        alpha = alpha_max
                    om = 1.0 - alpha
                    t_before = t_cur[p] / om
                    w = alpha * t_before
                    cdotg = col0 * gp[p, 0] + col1 * gp[p, 1] + col2 * gp[p, 2]
                    acc_r += w * gp[p, 0]
                    acc_g += w * gp[p, 1]
                    acc_bl += w * gp[p, 2]
                    dalpha = t_before * cdotg - s_acc[p] / om
                    if alpha_raw <= alpha_max:
                        acc_o += gauss * dalpha
                        dq = -alpha_raw * dalpha
                        acc_a += dq * 0.5 * dx * dx
                        acc_b += dq * dx * dy
                        acc_c += dq * 0.5 * dy * dy
                        acc_cx -= dq * (a * dx + b * dy)
                        acc_cy -= dq * (b * dx + c * dy)
                    s_acc[p] += w * cdotg
                    t_cur[p] = t_before
            pair_grads[idx, 0] = acc_cx
            pair_grads[idx, 1] = acc_cy
            pair_grads[idx, 2] = acc_a
            pair_grads[idx, 3] = acc_b
            pair_grads[idx, 4] = acc_c
            pair_grads[idx, 5] = acc_r
            pair_grads[idx, 6] = acc_g
            pair_grads[idx, 7] = acc_bl
            pair_grads[idx, 8] = acc_o

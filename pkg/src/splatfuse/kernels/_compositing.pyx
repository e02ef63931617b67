# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled front-to-back compositing kernels.

Tile-based (16x16) rasterization of depth-ordered 2D Gaussians with the
matching hand-derived backward pass. Semantics are identical to the pure
numpy implementation in `compositing_py`; the per-pixel contribution rule
is: inside the 3-sigma Mahalanobis ellipse (q <= 9), alpha = opacity * G
clamped to 0.999.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, floor

cnp.import_array()

DEF TILE = 16
DEF QMAX = 9.0
DEF ALPHA_MAX = 0.999


cdef inline Py_ssize_t _imax(Py_ssize_t a, Py_ssize_t b):
    return a if a > b else b


cdef inline Py_ssize_t _imin(Py_ssize_t a, Py_ssize_t b):
    return a if a < b else b


cdef int _pixel_bounds(double m, double r, Py_ssize_t n, Py_ssize_t* lo, Py_ssize_t* hi):
    # pixel centres sit at index + 0.5; overlap iff |center - m| <= r
    lo[0] = _imax(<Py_ssize_t>ceil(m - r - 0.5), 0)
    hi[0] = _imin(<Py_ssize_t>floor(m + r - 0.5), n - 1)
    return lo[0] <= hi[0]


def composite_forward(cnp.int64_t[::1] order,
                      double[:, ::1] means2d,
                      double[:, ::1] cov_inv,
                      double[:, ::1] radii,
                      double[::1] opacity,
                      double[:, ::1] colors,
                      double[::1] background,
                      Py_ssize_t height, Py_ssize_t width):
    cdef Py_ssize_t nz = colors.shape[1]
    cdef cnp.ndarray out = np.empty((height, width, nz), dtype=np.float64)
    cdef double[:, :, ::1] img = out

    cdef Py_ssize_t tiles_x = (width + TILE - 1) // TILE
    cdef Py_ssize_t tiles_y = (height + TILE - 1) // TILE
    cdef Py_ssize_t n_tiles = tiles_x * tiles_y

    cdef cnp.ndarray counts_arr = np.zeros(n_tiles + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] offsets = counts_arr
    cdef Py_ssize_t k, i, t, tx, ty, tx0, tx1, ty0, ty1
    cdef Py_ssize_t x0, x1, y0, y1

    # pass 1: count prim->tile overlaps
    for k in range(order.shape[0]):
        i = order[k]
        if not _pixel_bounds(means2d[i, 0], radii[i, 0], width, &x0, &x1):
            continue
        if not _pixel_bounds(means2d[i, 1], radii[i, 1], height, &y0, &y1):
            continue
        tx0 = x0 // TILE; tx1 = x1 // TILE
        ty0 = y0 // TILE; ty1 = y1 // TILE
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                offsets[ty * tiles_x + tx + 1] += 1

    for t in range(n_tiles):
        offsets[t + 1] += offsets[t]

    # pass 2: fill per-tile primitive lists (depth order is preserved)
    cdef cnp.ndarray lists_arr = np.empty(offsets[n_tiles], dtype=np.int64)
    cdef cnp.int64_t[::1] tile_lists = lists_arr
    cdef cnp.ndarray cursor_arr = counts_arr[:n_tiles].copy()
    cdef cnp.int64_t[::1] cursor = cursor_arr
    for k in range(order.shape[0]):
        i = order[k]
        if not _pixel_bounds(means2d[i, 0], radii[i, 0], width, &x0, &x1):
            continue
        if not _pixel_bounds(means2d[i, 1], radii[i, 1], height, &y0, &y1):
            continue
        tx0 = x0 // TILE; tx1 = x1 // TILE
        ty0 = y0 // TILE; ty1 = y1 // TILE
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                t = ty * tiles_x + tx
                tile_lists[cursor[t]] = i
                cursor[t] += 1

    cdef Py_ssize_t px, py, z, lo, hi
    cdef double fpx, fpy, dx, dy, q, g, a, trans
    cdef double rx, ry, mx, my

    for ty in range(tiles_y):
        for tx in range(tiles_x):
            t = ty * tiles_x + tx
            lo = offsets[t]; hi = offsets[t + 1]
            for py in range(ty * TILE, _imin((ty + 1) * TILE, height)):
                fpy = py + 0.5
                for px in range(tx * TILE, _imin((tx + 1) * TILE, width)):
                    fpx = px + 0.5
                    trans = 1.0
                    for z in range(nz):
                        img[py, px, z] = 0.0
                    for k in range(lo, hi):
                        i = tile_lists[k]
                        mx = means2d[i, 0]; my = means2d[i, 1]
                        rx = radii[i, 0]; ry = radii[i, 1]
                        dx = fpx - mx; dy = fpy - my
                        if dx > rx or dx < -rx or dy > ry or dy < -ry:
                            continue
                        q = cov_inv[i, 0] * dx * dx + 2.0 * cov_inv[i, 1] * dx * dy \
                            + cov_inv[i, 2] * dy * dy
                        if q > QMAX:
                            continue
                        g = exp(-0.5 * q)
                        a = opacity[i] * g
                        if a > ALPHA_MAX:
                            a = ALPHA_MAX
                        for z in range(nz):
                            img[py, px, z] += colors[i, z] * a * trans
                        trans *= 1.0 - a
                    for z in range(nz):
                        img[py, px, z] += background[z] * trans
    return out


def composite_backward(cnp.int64_t[::1] order,
                       double[:, ::1] means2d,
                       double[:, ::1] cov_inv,
                       double[:, ::1] radii,
                       double[::1] opacity,
                       double[:, ::1] colors,
                       double[::1] background,
                       Py_ssize_t height, Py_ssize_t width,
                       double[:, :, ::1] grad_out):
    cdef Py_ssize_t n = means2d.shape[0]
    cdef Py_ssize_t nz = colors.shape[1]

    cdef cnp.ndarray gm_arr = np.zeros((n, 2), dtype=np.float64)
    cdef cnp.ndarray gc_arr = np.zeros((n, 3), dtype=np.float64)
    cdef cnp.ndarray go_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray gcol_arr = np.zeros((n, nz), dtype=np.float64)
    cdef double[:, ::1] g_mean = gm_arr
    cdef double[:, ::1] g_cinv = gc_arr
    cdef double[::1] g_op = go_arr
    cdef double[:, ::1] g_col = gcol_arr

    cdef Py_ssize_t tiles_x = (width + TILE - 1) // TILE
    cdef Py_ssize_t tiles_y = (height + TILE - 1) // TILE
    cdef Py_ssize_t n_tiles = tiles_x * tiles_y

    cdef cnp.ndarray counts_arr = np.zeros(n_tiles + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] offsets = counts_arr
    cdef Py_ssize_t k, i, t, tx, ty, tx0, tx1, ty0, ty1
    cdef Py_ssize_t x0, x1, y0, y1

    for k in range(order.shape[0]):
        i = order[k]
        if not _pixel_bounds(means2d[i, 0], radii[i, 0], width, &x0, &x1):
            continue
        if not _pixel_bounds(means2d[i, 1], radii[i, 1], height, &y0, &y1):
            continue
        tx0 = x0 // TILE; tx1 = x1 // TILE
        ty0 = y0 // TILE; ty1 = y1 // TILE
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                offsets[ty * tiles_x + tx + 1] += 1
    for t in range(n_tiles):
        offsets[t + 1] += offsets[t]

    cdef cnp.ndarray lists_arr = np.empty(offsets[n_tiles], dtype=np.int64)
    cdef cnp.int64_t[::1] tile_lists = lists_arr
    cdef cnp.ndarray cursor_arr = counts_arr[:n_tiles].copy()
    cdef cnp.int64_t[::1] cursor = cursor_arr
    for k in range(order.shape[0]):
        i = order[k]
        if not _pixel_bounds(means2d[i, 0], radii[i, 0], width, &x0, &x1):
            continue
        if not _pixel_bounds(means2d[i, 1], radii[i, 1], height, &y0, &y1):
            continue
        tx0 = x0 // TILE; tx1 = x1 // TILE
        ty0 = y0 // TILE; ty1 = y1 // TILE
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                t = ty * tiles_x + tx
                tile_lists[cursor[t]] = i
                cursor[t] += 1

    # per-pixel contributor stack (bounded by the longest tile list)
    cdef Py_ssize_t max_len = 0
    for t in range(n_tiles):
        if offsets[t + 1] - offsets[t] > max_len:
            max_len = offsets[t + 1] - offsets[t]
    cdef cnp.ndarray bi_arr = np.empty(max_len, dtype=np.int64)
    cdef cnp.ndarray ba_arr = np.empty(max_len, dtype=np.float64)
    cdef cnp.ndarray bg_arr = np.empty(max_len, dtype=np.float64)
    cdef cnp.int64_t[::1] buf_idx = bi_arr
    cdef double[::1] buf_alpha = ba_arr
    cdef double[::1] buf_g = bg_arr
    cdef cnp.ndarray s_arr = np.empty(nz, dtype=np.float64)
    cdef double[::1] suffix = s_arr

    cdef Py_ssize_t px, py, z, lo, hi, m, j
    cdef double fpx, fpy, dx, dy, q, g, a, trans, t_before, w
    cdef double rx, ry, mx, my, dcda, dq, ci0, ci1, ci2

    for ty in range(tiles_y):
        for tx in range(tiles_x):
            t = ty * tiles_x + tx
            lo = offsets[t]; hi = offsets[t + 1]
            if lo == hi:
                continue
            for py in range(ty * TILE, _imin((ty + 1) * TILE, height)):
                fpy = py + 0.5
                for px in range(tx * TILE, _imin((tx + 1) * TILE, width)):
                    fpx = px + 0.5
                    trans = 1.0
                    m = 0
                    for k in range(lo, hi):
                        i = tile_lists[k]
                        dx = fpx - means2d[i, 0]; dy = fpy - means2d[i, 1]
                        if dx > radii[i, 0] or dx < -radii[i, 0] \
                                or dy > radii[i, 1] or dy < -radii[i, 1]:
                            continue
                        q = cov_inv[i, 0] * dx * dx + 2.0 * cov_inv[i, 1] * dx * dy \
                            + cov_inv[i, 2] * dy * dy
                        if q > QMAX:
                            continue
                        g = exp(-0.5 * q)
                        a = opacity[i] * g
                        if a > ALPHA_MAX:
                            a = ALPHA_MAX
                        buf_idx[m] = i
                        buf_alpha[m] = a
                        buf_g[m] = g
                        m += 1
                        trans *= 1.0 - a
                    if m == 0:
                        continue
                    for z in range(nz):
                        suffix[z] = background[z] * trans
                    # reverse scan: trans walks back from the final transmittance
                    for j in range(m - 1, -1, -1):
                        i = buf_idx[j]
                        a = buf_alpha[j]
                        g = buf_g[j]
                        t_before = trans / (1.0 - a)
                        w = a * t_before
                        dcda = 0.0
                        for z in range(nz):
                            g_col[i, z] += w * grad_out[py, px, z]
                            dcda += grad_out[py, px, z] * (colors[i, z] * t_before
                                                           - suffix[z] / (1.0 - a))
                        if a < ALPHA_MAX:  # clamp kills the alpha path
                            g_op[i] += dcda * g
                            dq = dcda * opacity[i] * g * (-0.5)
                            mx = means2d[i, 0]; my = means2d[i, 1]
                            dx = fpx - mx; dy = fpy - my
                            ci0 = cov_inv[i, 0]; ci1 = cov_inv[i, 1]; ci2 = cov_inv[i, 2]
                            g_cinv[i, 0] += dq * dx * dx
                            g_cinv[i, 1] += dq * 2.0 * dx * dy
                            g_cinv[i, 2] += dq * dy * dy
                            g_mean[i, 0] -= dq * (2.0 * ci0 * dx + 2.0 * ci1 * dy)
                            g_mean[i, 1] -= dq * (2.0 * ci1 * dx + 2.0 * ci2 * dy)
                        for z in range(nz):
                            suffix[z] += w * colors[i, z]
                        trans = t_before
    return gm_arr, gc_arr, go_arr, gcol_arr

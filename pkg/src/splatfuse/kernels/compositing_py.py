"""Pure numpy compositing, used when the compiled kernel is unavailable.

Same contract and semantics as the Cython module: depth-ordered
front-to-back alpha blending, contribution only inside the 3-sigma
Mahalanobis ellipse (q <= 9), alpha clamped to 0.999. Vectorized
primitive-major over each primitive's pixel bounding box; correctness of
the per-pixel ordering follows from iterating primitives in depth order.
"""

import numpy as np

ALPHA_MAX = 0.999
QMAX = 9.0


def _bbox(mean, radius, width, height):
    x0 = max(int(np.ceil(mean[0] - radius[0] - 0.5)), 0)
    x1 = min(int(np.floor(mean[0] + radius[0] - 0.5)), width - 1)
    y0 = max(int(np.ceil(mean[1] - radius[1] - 0.5)), 0)
    y1 = min(int(np.floor(mean[1] + radius[1] - 0.5)), height - 1)
    return x0, x1, y0, y1


def _alpha_patch(mean, cinv, opacity, x0, x1, y0, y1):
    """Alpha and Gaussian weight over an inclusive pixel-index box."""
    xs = np.arange(x0, x1 + 1) + 0.5 - mean[0]
    ys = np.arange(y0, y1 + 1) + 0.5 - mean[1]
    dx = xs[None, :]
    dy = ys[:, None]
    q = cinv[0] * dx * dx + 2.0 * cinv[1] * dx * dy + cinv[2] * dy * dy
    inside = q <= QMAX
    g = np.where(inside, np.exp(-0.5 * np.where(inside, q, 0.0)), 0.0)
    alpha = np.minimum(opacity * g, ALPHA_MAX)
    return alpha, g, inside, dx, dy


def composite_forward(order, means2d, cov_inv, radii, opacity, colors,
                      background, height, width):
    nz = colors.shape[1]
    img = np.zeros((height, width, nz))
    trans = np.ones((height, width))
    for i in order:
        x0, x1, y0, y1 = _bbox(means2d[i], radii[i], width, height)
        if x0 > x1 or y0 > y1:
            continue
        alpha, _, inside, _, _ = _alpha_patch(means2d[i], cov_inv[i],
                                              opacity[i], x0, x1, y0, y1)
        alpha = np.where(inside, alpha, 0.0)
        t_patch = trans[y0:y1 + 1, x0:x1 + 1]
        img[y0:y1 + 1, x0:x1 + 1] += (alpha * t_patch)[:, :, None] * colors[i]
        trans[y0:y1 + 1, x0:x1 + 1] = t_patch * (1.0 - alpha)
    img += trans[:, :, None] * background
    return img


def composite_backward(order, means2d, cov_inv, radii, opacity, colors,
                       background, height, width, grad_out):
    n = means2d.shape[0]
    nz = colors.shape[1]
    g_mean = np.zeros((n, 2))
    g_cinv = np.zeros((n, 3))
    g_op = np.zeros(n)
    g_col = np.zeros((n, nz))

    # forward replay to cache per-primitive patches and final transmittance
    trans = np.ones((height, width))
    cache = []
    for i in order:
        x0, x1, y0, y1 = _bbox(means2d[i], radii[i], width, height)
        if x0 > x1 or y0 > y1:
            cache.append(None)
            continue
        alpha, g, inside, dx, dy = _alpha_patch(means2d[i], cov_inv[i],
                                                opacity[i], x0, x1, y0, y1)
        alpha = np.where(inside, alpha, 0.0)
        cache.append((x0, x1, y0, y1, alpha, g, inside, dx, dy))
        trans[y0:y1 + 1, x0:x1 + 1] *= 1.0 - alpha

    # reverse scan: suffix holds sum_{j>k} c_j alpha_j T_j + bg T_final
    suffix = trans[:, :, None] * background
    for pos in range(len(order) - 1, -1, -1):
        entry = cache[pos]
        if entry is None:
            continue
        i = order[pos]
        x0, x1, y0, y1, alpha, g, inside, dx, dy = entry
        go = grad_out[y0:y1 + 1, x0:x1 + 1]
        t_after = trans[y0:y1 + 1, x0:x1 + 1]
        one_minus = 1.0 - alpha
        t_before = t_after / one_minus
        w = alpha * t_before

        g_col[i] += np.einsum("yx,yxz->z", w, go)
        s_patch = suffix[y0:y1 + 1, x0:x1 + 1]
        dcda = np.einsum("yxz,yxz->yx", go,
                         colors[i][None, None, :] * t_before[:, :, None]
                         - s_patch / one_minus[:, :, None])

        live = inside & (opacity[i] * g < ALPHA_MAX)
        dcda = np.where(live, dcda, 0.0)
        g_op[i] += float(np.sum(dcda * g))
        dq = dcda * opacity[i] * g * (-0.5)
        g_cinv[i, 0] += float(np.sum(dq * dx * dx))
        g_cinv[i, 1] += float(np.sum(dq * 2.0 * dx * dy))
        g_cinv[i, 2] += float(np.sum(dq * dy * dy))
        a_, b_, c_ = cov_inv[i]
        g_mean[i, 0] -= float(np.sum(dq * (2.0 * a_ * dx + 2.0 * b_ * dy)))
        g_mean[i, 1] -= float(np.sum(dq * (2.0 * b_ * dx + 2.0 * c_ * dy)))

        suffix[y0:y1 + 1, x0:x1 + 1] = s_patch + w[:, :, None] * colors[i]
        trans[y0:y1 + 1, x0:x1 + 1] = t_before
    return g_mean, g_cinv, g_op, g_col

"""Image and feature losses used by the two training stages.

The image loss combines mean absolute error with structural dissimilarity.
SSIM is implemented as a single graph node with a hand-written adjoint: the
forward pass computes five Gaussian-filtered moment fields and the backward
pass pushes per-window gradients back through the filters, which for a
symmetric kernel is a zero-padded correlation with the same kernel.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..autodiff import (
    Tensor,
    add,
    as_tensor,
    exp,
    from_op,
    log,
    mul,
    relu,
    sub,
    tmean,
    tsum,
)

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _gauss_kernel() -> np.ndarray:
    half = (WINDOW_SIZE - 1) / 2.0
    x = np.arange(WINDOW_SIZE, dtype=np.float64) - half
    k = np.exp(-0.5 * (x / WINDOW_SIGMA) ** 2)
    return k / k.sum()


_KERNEL = _gauss_kernel()


def _filter_valid(img: np.ndarray) -> np.ndarray:
    """Separable valid-mode Gaussian correlation over the two image axes."""
    out = np.einsum(
        "hwzu,u->hwz", sliding_window_view(img, WINDOW_SIZE, axis=0), _KERNEL
    )
    out = np.einsum(
        "hwzu,u->hwz", sliding_window_view(out, WINDOW_SIZE, axis=1), _KERNEL
    )
    return out


def _filter_adjoint(grad: np.ndarray) -> np.ndarray:
    """Adjoint of `_filter_valid`: zero-pad, then correlate.

    The kernel is symmetric, so the flip in the adjoint is a no-op.
    """
    pad = WINDOW_SIZE - 1
    g = np.pad(grad, ((pad, pad), (0, 0), (0, 0)))
    g = np.einsum("hwzu,u->hwz", sliding_window_view(g, WINDOW_SIZE, axis=0), _KERNEL)
    g = np.pad(g, ((0, 0), (pad, pad), (0, 0)))
    g = np.einsum("hwzu,u->hwz", sliding_window_view(g, WINDOW_SIZE, axis=1), _KERNEL)
    return g


def _check_image_pair(a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")


def ssim(a, b) -> Tensor:
    """Mean structural similarity over valid 11x11 Gaussian windows.

    Inputs are (H, W, Z) images in [0, 1]; the map is averaged over all
    window positions and channels. Constants follow the standard choice
    for unit dynamic range, C1 = 0.01^2 and C2 = 0.03^2.
    """
    a, b = as_tensor(a), as_tensor(b)
    _check_image_pair(a, b)
    if a.ndim != 3:
        raise ValueError(f"expected (H, W, Z) images, got shape {a.shape}")
    if min(a.shape[0], a.shape[1]) < WINDOW_SIZE:
        raise ValueError(f"image sides must be >= {WINDOW_SIZE}, got {a.shape}")

    ad, bd = a.data, b.data
    m_a = _filter_valid(ad)
    m_b = _filter_valid(bd)
    r_aa = _filter_valid(ad * ad)
    r_bb = _filter_valid(bd * bd)
    r_ab = _filter_valid(ad * bd)

    lum_n = 2.0 * m_a * m_b + SSIM_C1
    con_n = 2.0 * (r_ab - m_a * m_b) + SSIM_C2
    lum_d = m_a * m_a + m_b * m_b + SSIM_C1
    con_d = (r_aa - m_a * m_a) + (r_bb - m_b * m_b) + SSIM_C2
    denom = lum_d * con_d
    smap = lum_n * con_n / denom
    value = smap.mean()

    def back(g):
        gmap = np.asarray(g, dtype=np.float64) / smap.size
        # partials of the map wrt the five filtered moment fields
        d_rab = gmap * 2.0 * lum_n / denom
        d_raa = gmap * (-lum_n * con_n / (lum_d * con_d * con_d))
        d_rbb = d_raa
        common = lum_n * con_n * (con_d - lum_d) / (denom * denom)
        d_ma = gmap * (2.0 * m_b * (con_n - lum_n) / denom - 2.0 * m_a * common)
        d_mb = gmap * (2.0 * m_a * (con_n - lum_n) / denom - 2.0 * m_b * common)
        g_a = _filter_adjoint(d_ma) + 2.0 * ad * _filter_adjoint(d_raa)
        g_b = _filter_adjoint(d_mb) + 2.0 * bd * _filter_adjoint(d_rbb)
        g_ab = _filter_adjoint(d_rab)
        g_a += bd * g_ab
        g_b += ad * g_ab
        return g_a, g_b

    return from_op(value, (a, b), back, "ssim")


def l1_loss(a, b) -> Tensor:
    """Mean absolute error between two equal-shape arrays."""
    a, b = as_tensor(a), as_tensor(b)
    _check_image_pair(a, b)
    diff = sub(a, b)
    return tmean(add(relu(diff), relu(mul(diff, -1.0))))


def loss_branch(render, target, lam: float = 0.5) -> Tensor:
    """Stage-one image loss: L1 + lam * (1 - SSIM)."""
    return add(l1_loss(render, target), mul(sub(1.0, ssim(render, target)), lam))


def zero_perceptual(render, target) -> Tensor:
    """Placeholder perceptual distance; contributes exactly zero."""
    return Tensor(0.0)


def loss_fuse(render, target, lam: float = 0.5, gamma: float = 0.2,
              perceptual=zero_perceptual) -> Tensor:
    """Stage-two image loss: L1 + lam * (1 - SSIM) + gamma * perceptual.

    `perceptual` is any callable mapping (render, target) to a scalar
    graph node; the default contributes zero, keeping the term inert
    until a learned distance is plugged in.
    """
    base = loss_branch(render, target, lam=lam)
    return add(base, mul(perceptual(render, target), gamma))


def recon_loss(a, b) -> Tensor:
    """Squared L2 distance between two feature vectors."""
    a, b = as_tensor(a), as_tensor(b)
    _check_image_pair(a, b)
    diff = sub(a, b)
    return tsum(mul(diff, diff))


def emotion_stage2_loss(logits, target_onehot, f_gen, f_target) -> Tensor:
    """Cross entropy over softmaxed logits plus feature reconstruction."""
    logits = as_tensor(logits)
    onehot = np.asarray(target_onehot, dtype=np.float64)
    if onehot.shape != logits.shape:
        raise ValueError(f"label shape {onehot.shape} != logits shape {logits.shape}")
    if not (np.all((onehot == 0.0) | (onehot == 1.0)) and onehot.sum() == 1.0):
        raise ValueError("target must be a one-hot vector")
    # -sum(y * log softmax(l)) = logsumexp(l) - sum(y * l); shift by the max
    # (a constant) so the exponentials cannot overflow
    shift = float(logits.data.max())
    lse = add(log(tsum(exp(sub(logits, shift)))), shift)
    ce = sub(lse, tsum(mul(logits, onehot)))
    return add(ce, recon_loss(f_gen, f_target))

"""Differentiable front-to-back rasterization of projected Gaussians.

The compositing rule per pixel x, over primitives sorted front-to-back
by camera depth (ties broken by primitive index):

    C(x) = sum_i c_i a_i prod_{j<i} (1 - a_j) + bg * prod_j (1 - a_j)
    a_i  = min(opacity_i * G_i(x), 0.999)
    G_i  = exp(-0.5 d^T cov2d_i^{-1} d), d = x - mean2d_i

A primitive contributes at a pixel only when its Mahalanobis form is
inside three sigma (q <= 9); this cutoff is part of the compositing
semantics, so bounding-box culling in the kernels is exact rather than
approximate. Primitives behind the near plane or with a singular 2D
covariance (det <= 1e-12) are skipped entirely. There is no gradient
through the depth ordering.
"""

import numpy as np

from .. import kernels
from ..autodiff import Tensor, from_op
from .camera import Camera, project, project_backward
from .primitives import Scene, batch_covariance, covariance_backward

SINGULAR_EPS = 1e-12
ALPHA_MAX = 0.999


def gaussian_weight(x, mean2d, cov2d):
    """Eq-style Gaussian falloff at pixel position x, or None to skip.

    Returns None when the 2D covariance is numerically singular
    (determinant <= 1e-12), signalling the caller to drop the primitive
    at this pixel.
    """
    cov2d = np.asarray(cov2d, dtype=np.float64)
    det = cov2d[0, 0] * cov2d[1, 1] - cov2d[0, 1] * cov2d[1, 0]
    if det <= SINGULAR_EPS:
        return None
    d = np.asarray(x, dtype=np.float64) - np.asarray(mean2d, dtype=np.float64)
    q = (cov2d[1, 1] * d[0] * d[0] - 2.0 * cov2d[0, 1] * d[0] * d[1]
         + cov2d[0, 0] * d[1] * d[1]) / det
    return float(np.exp(-0.5 * q))


def _prepare(centers, scales, quats, opacities, camera):
    """Shared forward geometry: projection, culling, packing, ordering."""
    covs3d = batch_covariance(scales, quats)
    means2d, cov2d, depth, valid = project(centers, covs3d, camera)
    det = (cov2d[:, 0, 0] * cov2d[:, 1, 1]
           - cov2d[:, 0, 1] * cov2d[:, 1, 0])
    valid = valid & (det > SINGULAR_EPS)
    safe_det = np.where(valid, det, 1.0)

    cov_inv = np.empty((centers.shape[0], 3))
    cov_inv[:, 0] = cov2d[:, 1, 1] / safe_det
    cov_inv[:, 1] = -cov2d[:, 0, 1] / safe_det
    cov_inv[:, 2] = cov2d[:, 0, 0] / safe_det

    radii = 3.0 * np.sqrt(np.maximum(
        np.stack([cov2d[:, 0, 0], cov2d[:, 1, 1]], axis=-1), 0.0))

    idx = np.nonzero(valid)[0]
    order = idx[np.argsort(depth[idx], kind="stable")]
    return covs3d, means2d, cov2d, cov_inv, radii, order.astype(np.int64), valid


def rasterize(scene: Scene, camera: Camera, background) -> np.ndarray:
    """Forward render to an (H, W, Z) float image in [0, 1]-ish range."""
    background = np.ascontiguousarray(background, dtype=np.float64)
    if scene.n == 0:
        return np.broadcast_to(
            background, (camera.height, camera.width, background.shape[0])
        ).copy()
    _, means2d, _, cov_inv, radii, order, _ = _prepare(
        scene.centers, scene.scales, scene.quats, scene.opacities, camera)
    return kernels.composite_forward(
        order, np.ascontiguousarray(means2d), np.ascontiguousarray(cov_inv),
        np.ascontiguousarray(radii), scene.opacities,
        np.ascontiguousarray(scene.colors), background,
        camera.height, camera.width)


def _backward_fields(centers, scales, quats, opacities, colors, camera,
                     background, grad_out):
    """Gradients of the composite w.r.t. every primitive field."""
    covs3d, means2d, cov2d, cov_inv, radii, order, valid = _prepare(
        centers, scales, quats, opacities, camera)
    g_mean2d, g_cinv, g_op, g_col = kernels.composite_backward(
        order, np.ascontiguousarray(means2d), np.ascontiguousarray(cov_inv),
        np.ascontiguousarray(radii), opacities, np.ascontiguousarray(colors),
        np.ascontiguousarray(background, dtype=np.float64),
        camera.height, camera.width,
        np.ascontiguousarray(grad_out, dtype=np.float64))

    # packed (a, b, c) cotangent -> symmetric matrix cotangent for M = cov2d^-1
    n = centers.shape[0]
    g_m = np.empty((n, 2, 2))
    g_m[:, 0, 0] = g_cinv[:, 0]
    g_m[:, 0, 1] = 0.5 * g_cinv[:, 1]
    g_m[:, 1, 0] = 0.5 * g_cinv[:, 1]
    g_m[:, 1, 1] = g_cinv[:, 2]

    minv = np.empty((n, 2, 2))  # M itself, i.e. the inverse covariance
    minv[:, 0, 0] = cov_inv[:, 0]
    minv[:, 0, 1] = cov_inv[:, 1]
    minv[:, 1, 0] = cov_inv[:, 1]
    minv[:, 1, 1] = cov_inv[:, 2]
    g_cov2d = -minv @ g_m @ minv  # d(inverse): dM = -M dSigma M
    g_cov2d[~valid] = 0.0
    g_mean2d = np.where(valid[:, None], g_mean2d, 0.0)

    g_centers, g_covs3d = project_backward(
        centers, covs3d, camera, g_mean2d, g_cov2d, valid)
    g_scales, g_quats = covariance_backward(scales, quats, g_covs3d)
    return g_centers, g_scales, g_quats, g_op, g_col


def rasterize_grad(scene: Scene, camera: Camera, background, grad_out):
    """Public gradient entry point over a Scene.

    Returns a dict with gradients for centers, scales, quats, opacities
    and colors, each shaped like the corresponding scene array.
    """
    if scene.n == 0:
        z = np.asarray(background).shape[0]
        return {"centers": np.zeros((0, 3)), "scales": np.zeros((0, 3)),
                "quats": np.zeros((0, 4)), "opacities": np.zeros(0),
                "colors": np.zeros((0, z))}
    g_centers, g_scales, g_quats, g_op, g_col = _backward_fields(
        scene.centers, scene.scales, scene.quats, scene.opacities,
        scene.colors, camera, background, grad_out)
    return {"centers": g_centers, "scales": g_scales, "quats": g_quats,
            "opacities": g_op, "colors": g_col}


def render(centers: Tensor, scales: Tensor, quats: Tensor,
           opacities: Tensor, colors: Tensor, camera: Camera,
           background) -> Tensor:
    """Autodiff node wrapping the rasterizer.

    Inputs are graph tensors shaped (N,3), (N,3), (N,4), (N,), (N,Z);
    output is the (H, W, Z) image tensor. The backward pass runs the
    hand-derived kernel adjoint and the projection/covariance chain.
    """
    background = np.ascontiguousarray(background, dtype=np.float64)
    cen, sca, qua = centers.data, scales.data, quats.data
    opa, col = opacities.data, colors.data
    _, means2d, _, cov_inv, radii, order, _ = _prepare(cen, sca, qua, opa, camera)
    img = kernels.composite_forward(
        order, np.ascontiguousarray(means2d), np.ascontiguousarray(cov_inv),
        np.ascontiguousarray(radii), opa, np.ascontiguousarray(col),
        background, camera.height, camera.width)

    def backward(grad_out):
        g_cen, g_sca, g_qua, g_op, g_col = _backward_fields(
            cen, sca, qua, opa, col, camera, background, grad_out)
        return g_cen, g_sca, g_qua, g_op, g_col

    return from_op(img, [centers, scales, quats, opacities, colors],
                   backward, op="render")

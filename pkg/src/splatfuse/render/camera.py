"""Pinhole camera model and perspective projection of 3D Gaussians.

Projection follows the usual splatting recipe: transform the center into
camera space, project with the pinhole model, and push the world
covariance through the local affine approximation, cov2d = J W Sigma W^T
J^T with W the camera rotation and J the projection Jacobian at the
center. No low-pass dilation is added to the 2D covariance.
"""

from dataclasses import dataclass

import numpy as np

NEAR_PLANE = 1e-4


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray     # (3,3) world-to-camera
    translation: np.ndarray  # (3,)
    width: int
    height: int

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("pose must be a (3,3) rotation and (3,) translation")
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3),
                           atol=1e-6):
            raise ValueError("camera rotation must be orthonormal")

    @classmethod
    def front_at(cls, distance: float, width: int, height: int,
                 focal: float) -> "Camera":
        """Camera on the -z axis looking toward +z at the world origin."""
        return cls(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0,
                   rotation=np.eye(3), translation=np.array([0.0, 0.0, distance]),
                   width=width, height=height)


def project(centers: np.ndarray, covs: np.ndarray, camera: Camera):
    """Project primitive centers and covariances to the image plane.

    Returns (means2d (N,2), cov2d (N,2,2), depth (N,), valid (N,) bool);
    rows behind the near plane are flagged invalid and their outputs are
    computed with a guarded depth so everything stays finite.
    """
    rot, tr = camera.rotation, camera.translation
    t = centers @ rot.T + tr
    depth = t[:, 2]
    valid = depth > NEAR_PLANE
    z = np.where(valid, depth, 1.0)
    x, y = t[:, 0], t[:, 1]

    means2d = np.stack([camera.fx * x / z + camera.cx,
                        camera.fy * y / z + camera.cy], axis=-1)

    n = centers.shape[0]
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = camera.fx / z
    jac[:, 0, 2] = -camera.fx * x / (z * z)
    jac[:, 1, 1] = camera.fy / z
    jac[:, 1, 2] = -camera.fy * y / (z * z)

    cam_cov = np.einsum("ab,nbc,dc->nad", rot, covs, rot)
    cov2d = np.einsum("nab,nbc,ndc->nad", jac, cam_cov, jac)
    return means2d, cov2d, depth, valid


def project_backward(centers, covs, camera, g_means2d, g_cov2d, valid):
    """Adjoint of project for the mean and covariance outputs.

    Includes the dependence of the Jacobian itself on the camera-space
    center, so gradients through cov2d reach the 3D center too. Depth is
    only consumed by the (non-differentiable) ordering, hence no depth
    cotangent. Invalid rows get zero gradient.
    """
    rot = camera.rotation
    t = centers @ rot.T + camera.translation
    z = np.where(valid, t[:, 2], 1.0)
    x, y = t[:, 0], t[:, 1]
    fx, fy = camera.fx, camera.fy

    n = centers.shape[0]
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = fx / z
    jac[:, 0, 2] = -fx * x / (z * z)
    jac[:, 1, 1] = fy / z
    jac[:, 1, 2] = -fy * y / (z * z)

    cam_cov = np.einsum("ab,nbc,dc->nad", rot, covs, rot)

    # mean path
    g_t = np.einsum("nab,na->nb", jac, g_means2d)

    # covariance path: L = sum g_cov2d * (J V J^T)
    g_v = np.einsum("nba,nbc,ncd->nad", jac, g_cov2d, jac)
    g_jac = (np.einsum("nab,nbc,ncd->nad", g_cov2d, jac, np.swapaxes(cam_cov, -1, -2))
             + np.einsum("nba,nbc,ncd->nad", g_cov2d, jac, cam_cov))

    # Jacobian entries depend on the camera-space center
    z2 = z * z
    z3 = z2 * z
    g_t[:, 0] += g_jac[:, 0, 2] * (-fx / z2)
    g_t[:, 1] += g_jac[:, 1, 2] * (-fy / z2)
    g_t[:, 2] += (g_jac[:, 0, 0] * (-fx / z2)
                  + g_jac[:, 1, 1] * (-fy / z2)
                  + g_jac[:, 0, 2] * (2 * fx * x / z3)
                  + g_jac[:, 1, 2] * (2 * fy * y / z3))

    g_centers = g_t @ rot
    g_covs = np.einsum("ba,nbc,cd->nad", rot, g_v, rot)
    g_centers[~valid] = 0.0
    g_covs[~valid] = 0.0
    return g_centers, g_covs

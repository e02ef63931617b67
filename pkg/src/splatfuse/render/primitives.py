"""Gaussian primitive storage and the scale/rotation -> covariance map.

A scene is a structure-of-arrays over primitives: center (3), scale (3),
rotation quaternion (4, scalar first), opacity, color (Z channels) and a
branch tag ("face" or "mouth") that routes each primitive to one
deformation branch. Branch tags are fixed at construction.
"""

from dataclasses import dataclass, field

import numpy as np

BRANCHES = ("face", "mouth")
UNIT_QUAT_TOL = 1e-6


@dataclass
class Scene:
    centers: np.ndarray   # (N, 3)
    scales: np.ndarray    # (N, 3), positive
    quats: np.ndarray     # (N, 4), scalar-first, unit norm
    opacities: np.ndarray  # (N,), in [0, 1]
    colors: np.ndarray    # (N, Z), in [0, 1]
    branches: np.ndarray = field(default=None)  # (N,) strings

    def __post_init__(self):
        self.centers = np.ascontiguousarray(self.centers, dtype=np.float64)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float64)
        self.quats = np.ascontiguousarray(self.quats, dtype=np.float64)
        self.opacities = np.ascontiguousarray(self.opacities, dtype=np.float64)
        self.colors = np.ascontiguousarray(self.colors, dtype=np.float64)
        if self.branches is None:
            self.branches = np.full(self.centers.shape[0], "face")
        self.branches = np.asarray(self.branches)
        n = self.centers.shape[0]
        for name, arr, cols in (("centers", self.centers, 3),
                                ("scales", self.scales, 3),
                                ("quats", self.quats, 4)):
            if arr.shape != (n, cols):
                raise ValueError(f"{name} must have shape ({n}, {cols})")
        if self.opacities.shape != (n,) or self.branches.shape != (n,):
            raise ValueError("opacities and branches must be (N,)")
        if self.colors.ndim != 2 or self.colors.shape[0] != n:
            raise ValueError("colors must be (N, Z)")
        if np.any(self.scales <= 0):
            raise ValueError("scale entries must be positive")
        if np.any(self.opacities < 0) or np.any(self.opacities > 1):
            raise ValueError("opacity must lie in [0, 1]")
        bad = set(self.branches.tolist()) - set(BRANCHES)
        if bad:
            raise ValueError(f"unknown branch tags: {sorted(bad)}")

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def n_channels(self) -> int:
        return self.colors.shape[1]

    def mask(self, branch: str) -> np.ndarray:
        if branch not in BRANCHES:
            raise ValueError(f"unknown branch {branch!r}")
        return self.branches == branch


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from scalar-first quaternions, (..., 4) -> (..., 3, 3).

    The polynomial form is used without normalizing, so the entries are
    smooth in all four components; unit norm is the caller's contract.
    """
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rot = np.empty(q.shape[:-1] + (3, 3))
    rot[..., 0, 0] = 1 - 2 * (y * y + z * z)
    rot[..., 0, 1] = 2 * (x * y - w * z)
    rot[..., 0, 2] = 2 * (x * z + w * y)
    rot[..., 1, 0] = 2 * (x * y + w * z)
    rot[..., 1, 1] = 1 - 2 * (x * x + z * z)
    rot[..., 1, 2] = 2 * (y * z - w * x)
    rot[..., 2, 0] = 2 * (x * z - w * y)
    rot[..., 2, 1] = 2 * (y * z + w * x)
    rot[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return rot


def _rot_partials(q: np.ndarray) -> np.ndarray:
    """d(rotation matrix)/d(quaternion), shape (..., 4, 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    zero = np.zeros_like(w)
    d = np.empty(q.shape[:-1] + (4, 3, 3))
    d[..., 0, :, :] = 2 * np.stack([
        np.stack([zero, -z, y], -1),
        np.stack([z, zero, -x], -1),
        np.stack([-y, x, zero], -1)], -2)
    d[..., 1, :, :] = 2 * np.stack([
        np.stack([zero, y, z], -1),
        np.stack([y, -2 * x, -w], -1),
        np.stack([z, w, -2 * x], -1)], -2)
    d[..., 2, :, :] = 2 * np.stack([
        np.stack([-2 * y, x, w], -1),
        np.stack([x, zero, z], -1),
        np.stack([-w, z, -2 * y], -1)], -2)
    d[..., 3, :, :] = 2 * np.stack([
        np.stack([-2 * z, -w, x], -1),
        np.stack([w, -2 * z, y], -1),
        np.stack([x, y, zero], -1)], -2)
    return d


def covariance_from(s: np.ndarray, r: np.ndarray) -> np.ndarray:
    """World covariance of one primitive: R diag(s)^2 R^T.

    Raises when the quaternion norm deviates from 1 by more than 1e-6;
    the batched internal path skips that check so gradient probes can
    treat the quaternion as free coordinates.
    """
    s = np.asarray(s, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    norm = float(np.linalg.norm(r))
    if abs(norm - 1.0) > UNIT_QUAT_TOL:
        raise ValueError(f"quaternion norm {norm} deviates from 1 beyond 1e-6")
    if np.any(s <= 0):
        raise ValueError("scale entries must be positive")
    rot = quat_to_rot(r)
    return rot @ np.diag(s * s) @ rot.T


def batch_covariance(scales: np.ndarray, quats: np.ndarray) -> np.ndarray:
    """(N,3) scales and (N,4) quaternions -> (N,3,3) covariances, unchecked."""
    rot = quat_to_rot(quats)
    rs = rot * (scales * scales)[:, None, :]  # R diag(s^2)
    return rs @ np.swapaxes(rot, -1, -2)


def covariance_backward(scales, quats, grad_sigma):
    """Adjoint of batch_covariance.

    grad_sigma is (N,3,3), dL/dSigma treating all nine entries as
    independent. Returns (dL/dscales (N,3), dL/dquats (N,4)).
    """
    rot = quat_to_rot(quats)
    d2 = scales * scales
    # dL/dD_kk for D = diag(s^2): (R^T G R)[k, k]
    rtgr = np.einsum("nki,nkl,nlj->nij", rot, grad_sigma, rot)
    g_scales = 2.0 * scales * np.einsum("nii->ni", rtgr)
    # dL/dR = (G + G^T) R D
    g_rot = (grad_sigma + np.swapaxes(grad_sigma, -1, -2)) @ (rot * d2[:, None, :])
    g_quats = np.einsum("nkij,nij->nk", _rot_partials(quats), g_rot)
    return g_scales, g_quats


def save_snapshot(scene: Scene, path) -> None:
    """Plain-text scene record: one primitive per line.

    Fields are space-separated: 3 center, 3 scale, 4 quaternion,
    1 opacity, Z color, branch tag. Floats use %.17g so a load
    round-trips float64 exactly.
    """
    z = scene.n_channels
    with open(path, "w") as fh:
        fh.write(f"# splatfuse scene: center(3) scale(3) quat(4) "
                 f"opacity(1) color({z}) branch\n")
        for i in range(scene.n):
            nums = np.concatenate([scene.centers[i], scene.scales[i],
                                   scene.quats[i], [scene.opacities[i]],
                                   scene.colors[i]])
            row = " ".join("%.17g" % v for v in nums)
            fh.write(f"{row} {scene.branches[i]}\n")


def load_snapshot(path) -> Scene:
    centers, scales, quats, opac, colors, branches = [], [], [], [], [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            vals = [float(v) for v in parts[:-1]]
            if len(vals) < 12:
                raise ValueError(f"short snapshot line: {line!r}")
            centers.append(vals[0:3])
            scales.append(vals[3:6])
            quats.append(vals[6:10])
            opac.append(vals[10])
            colors.append(vals[11:])
            branches.append(parts[-1])
    return Scene(np.array(centers), np.array(scales), np.array(quats),
                 np.array(opac), np.array(colors), np.array(branches))

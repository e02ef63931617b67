from .camera import NEAR_PLANE, Camera, project, project_backward
from .ppm import read_ppm, write_ppm
from .primitives import (Scene, batch_covariance, covariance_backward,
                         covariance_from, load_snapshot, quat_to_rot,
                         save_snapshot)
from .rasterizer import gaussian_weight, rasterize, rasterize_grad, render

__all__ = [
    "NEAR_PLANE", "Camera", "project", "project_backward",
    "read_ppm", "write_ppm",
    "Scene", "batch_covariance", "covariance_backward", "covariance_from",
    "load_snapshot", "quat_to_rot", "save_snapshot",
    "gaussian_weight", "rasterize", "rasterize_grad", "render",
]

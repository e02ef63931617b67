"""Multi-resolution tri-plane codebook encoding of canonical positions.

Per scale s in {1, 2, 4} there are three learnable code grids of
resolution (64*s)^2 covering the (X,Y), (X,Z) and (Y,Z) faces of the
unit cube. A query position is bilinearly interpolated on each plane,
the three interpolated codes are multiplied elementwise, the product is
gated by a per-scale linear projection of the clip-level attention
feature, and the per-scale slices are concatenated.
"""

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, concat, from_op, mul
from ..nn import MlpBlock

SCALES = (1, 2, 4)
# plane p interpolates over these two coordinate axes of the position
PLANE_AXES = ((0, 1), (0, 2), (1, 2))


@dataclass
class FeaturePlanes:
    base_resolution: int = 64
    d_code: int = 16
    scales: tuple = SCALES
    planes: dict = field(default_factory=dict)  # scale -> Tensor (3, r, r, d)

    @classmethod
    def init(cls, rng: np.random.Generator, base_resolution: int = 64,
             d_code: int = 16, scales=SCALES) -> "FeaturePlanes":
        # codes start near one so the three-plane product is near one
        obj = cls(base_resolution, d_code, tuple(scales))
        for s in obj.scales:
            r = base_resolution * s
            obj.planes[s] = Tensor(rng.uniform(0.9, 1.1, size=(3, r, r, d_code)),
                                   requires_grad=True)
        return obj

    @property
    def params(self):
        return [self.planes[s] for s in self.scales]

    def resolution(self, scale: int) -> int:
        return self.base_resolution * scale


def make_scale_projections(rng: np.random.Generator, d_attn: int,
                           d_code: int, scales=SCALES) -> dict:
    """Per-scale linear maps taking f_emo_attn to the code dimension."""
    return {s: MlpBlock([d_attn, d_code], "identity", rng=rng) for s in scales}


def _corner_weights(positions: np.ndarray, axes, r: int):
    """Bilinear corner indices and weights for one plane's axis pair."""
    pos = np.clip(positions[:, list(axes)], 0.0, 1.0)
    grid = pos * (r - 1)
    i0 = np.minimum(grid.astype(np.int64), r - 2)
    frac = grid - i0
    fu, fv = frac[:, 0], frac[:, 1]
    u0, v0 = i0[:, 0], i0[:, 1]
    weights = ((1 - fu) * (1 - fv), (1 - fu) * fv, fu * (1 - fv), fu * fv)
    corners = ((u0, v0), (u0, v0 + 1), (u0 + 1, v0), (u0 + 1, v0 + 1))
    return corners, weights


def plane_gather(plane: Tensor, positions: np.ndarray, axes) -> Tensor:
    """Bilinear interpolation of one (r, r, d) code grid, -> (P, d).

    positions are (P, 3) in the unit cube (clamped); `axes` picks which
    two coordinates index the grid (first axis is the grid row). The
    backward pass scatter-adds the four corner contributions in a fixed
    order, so gradients are reproducible.
    """
    corners, weights = _corner_weights(positions, axes, plane.shape[0])
    data = plane.data
    out = sum(w[:, None] * data[c] for c, w in zip(corners, weights))

    def backward(g):
        grad = np.zeros_like(data)
        for c, w in zip(corners, weights):
            np.add.at(grad, c, w[:, None] * g)
        return (grad,)

    return from_op(out, [plane], backward, op="plane_gather")


def _gather_product(grid: Tensor, positions: np.ndarray) -> Tensor:
    """Elementwise product of the three planes' interpolated codes.

    Fused op over a (3, r, r, d) grid tensor: one forward gather per
    plane and a single dense scatter in backward (product rule).
    """
    r = grid.shape[1]
    data = grid.data
    plans = [_corner_weights(positions, axes, r) for axes in PLANE_AXES]
    codes = []
    for p, (corners, weights) in enumerate(plans):
        codes.append(sum(w[:, None] * data[p][c]
                         for c, w in zip(corners, weights)))
    prod = codes[0] * codes[1] * codes[2]

    def backward(g):
        grad = np.zeros_like(data)
        for p, (corners, weights) in enumerate(plans):
            others = g * codes[(p + 1) % 3] * codes[(p + 2) % 3]
            for (cu, cv), w in zip(corners, weights):
                np.add.at(grad[p], (cu, cv), w[:, None] * others)
        return (grad,)

    return from_op(prod, [grid], backward, op="plane_gather_product")


def encode_emotion(positions: np.ndarray, f_emo_attn: Tensor,
                   planes: FeaturePlanes, scale_projs: dict) -> Tensor:
    """Codebook encoding of positions, (P, 3) -> (P, 3 * d_code).

    A single (3,) position is accepted and returns (3 * d_code,).
    """
    single = positions.ndim == 1
    pos = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    slices = []
    for s in planes.scales:
        prod = _gather_product(planes.planes[s], pos)
        gate = scale_projs[s](f_emo_attn)          # (d_code,)
        slices.append(mul(prod, gate))             # broadcast over P
    out = concat(slices, axis=1)
    return out[0] if single else out

"""Multi-head deformation decoder and delta application.

The decoder maps each primitive's fused state vector to a deformation
delta through a shared trunk and separate heads: position (3), rotation
(quaternion offset, 4) and log-scale (3). The mouth branch exposes only
the position head; its rotation and scale deltas are identically zero.
Scale deltas act multiplicatively through exp so scales stay positive,
and quaternion offsets are applied additively then renormalized.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, exp, from_op, mul
from .nn import MlpBlock

QUAT_NORM_EPS = 1e-8


@dataclass
class DeformationDelta:
    d_center: Tensor   # (P, 3)
    d_quat: Tensor     # (P, 4)
    d_logscale: Tensor  # (P, 3)


class DeformDecoder:
    """Shared trunk with three heads; branch picks which heads exist."""

    def __init__(self, d_state: int, branch: str, *, rng: np.random.Generator,
                 hidden: int = 64, head_gain: float = 0.1):
        if branch not in ("face", "mouth"):
            raise ValueError(f"unknown branch {branch!r}")
        self.branch = branch
        self.d_state = d_state
        # trunk keeps its final activation so heads see nonlinear features
        self.trunk = MlpBlock([d_state, hidden, hidden], "relu", rng=rng,
                              activate_final=True)
        self.head_center = MlpBlock([hidden, 3], "identity", rng=rng)
        heads = [self.head_center]
        if branch == "face":
            self.head_quat = MlpBlock([hidden, 4], "identity", rng=rng)
            self.head_scale = MlpBlock([hidden, 3], "identity", rng=rng)
            heads += [self.head_quat, self.head_scale]
        # damp the randomly initialized heads so the t=0 deformation is small
        for head in heads:
            head.weights[0].data *= head_gain
            head.biases[0].data *= head_gain

    @property
    def params(self):
        out = self.trunk.params + self.head_center.params
        if self.branch == "face":
            out += self.head_quat.params + self.head_scale.params
        return out

    def decode(self, state: Tensor) -> DeformationDelta:
        """(P, D_state) fused states -> per-primitive deltas."""
        if state.shape[-1] != self.d_state:
            raise ValueError(f"expected state dim {self.d_state}, "
                             f"got {state.shape[-1]}")
        h = self.trunk(state)
        d_center = self.head_center(h)
        if self.branch == "mouth":
            n = state.shape[0] if state.ndim == 2 else 1
            zero4 = Tensor(np.zeros((n, 4)))
            zero3 = Tensor(np.zeros((n, 3)))
            return DeformationDelta(d_center, zero4, zero3)
        return DeformationDelta(d_center, self.head_quat(h),
                                self.head_scale(h))


def normalize_quats(q: Tensor):
    """Row-normalize (P, 4) quaternions as a graph op.

    Rows whose norm falls below 1e-8 are replaced by the identity
    rotation with zero gradient; returns (tensor, fallback_mask).
    """
    data = q.data
    norms = np.linalg.norm(data, axis=-1, keepdims=True)
    degenerate = norms[..., 0] < QUAT_NORM_EPS
    safe = np.where(norms < QUAT_NORM_EPS, 1.0, norms)
    out = data / safe
    if np.any(degenerate):
        out = out.copy()
        out[degenerate] = np.array([1.0, 0.0, 0.0, 0.0])

    def backward(g):
        # d(q/|q|) = (I - u u^T)/|q| applied rowwise, u = q/|q|
        u = out
        dot = np.sum(g * u, axis=-1, keepdims=True)
        grad = (g - dot * u) / safe
        grad[degenerate] = 0.0
        return (grad,)

    return from_op(out, [q], backward, op="quat_normalize"), degenerate


def apply_delta(centers: Tensor, scales: Tensor, quats: Tensor,
                delta: DeformationDelta):
    """Deform canonical geometry; opacity and color pass through untouched.

    center' = center + d_center; scale' = scale * exp(d_logscale);
    quat' = normalize(quat + d_quat). Returns (centers', scales',
    quats', degenerate_quat_mask).
    """
    new_centers = add(centers, delta.d_center)
    new_scales = mul(scales, exp(delta.d_logscale))
    new_quats, degenerate = normalize_quats(add(quats, delta.d_quat))
    return new_centers, new_scales, new_quats, degenerate

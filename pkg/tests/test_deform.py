"""Deformation decoder and delta-application tests."""

import numpy as np
import pytest
from fd import central_diff_sample, sample_indices

from splatfuse.autodiff import Tensor, backward, tsum
from splatfuse.deform import (DeformationDelta, DeformDecoder, apply_delta,
                              normalize_quats)
from splatfuse.render import quat_to_rot
from splatfuse.rng import stream
from scenes import random_unit_quats


def _zero_heads(dec: DeformDecoder):
    heads = [dec.head_center]
    if dec.branch == "face":
        heads += [dec.head_quat, dec.head_scale]
    for head in heads:
        head.weights[0].data[:] = 0.0
        head.biases[0].data[:] = 0.0


def test_zero_network_zero_delta():
    dec = DeformDecoder(6, "face", rng=stream(70, "def.zero"), hidden=8)
    _zero_heads(dec)
    for w in dec.trunk.weights:
        w.data[:] = 0.0
    for b in dec.trunk.biases:
        b.data[:] = 0.0
    delta = dec.decode(Tensor(np.random.default_rng(0).normal(size=(3, 6))))
    assert np.all(delta.d_center.data == 0.0)
    assert np.all(delta.d_quat.data == 0.0)
    assert np.all(delta.d_logscale.data == 0.0)


def test_mouth_branch_emits_position_only():
    dec = DeformDecoder(6, "mouth", rng=stream(71, "def.mouth"), hidden=8)
    delta = dec.decode(Tensor(np.ones((5, 6))))
    assert np.all(delta.d_quat.data == 0.0)
    assert np.all(delta.d_logscale.data == 0.0)
    assert not hasattr(dec, "head_quat")


def test_decoder_dimension_mismatch():
    dec = DeformDecoder(6, "face", rng=stream(72, "def.dim"), hidden=8)
    with pytest.raises(ValueError):
        dec.decode(Tensor(np.ones((2, 7))))


def test_head_gradients_match_finite_differences():
    rng = stream(73, "def.fd")
    dec = DeformDecoder(5, "face", rng=rng, hidden=8)
    states = rng.normal(size=(4, 5))
    probes = [rng.normal(size=(4, 3)), rng.normal(size=(4, 4)),
              rng.normal(size=(4, 3))]

    def run():
        d = dec.decode(Tensor(states))
        return (tsum(d.d_center * Tensor(probes[0]))
                + tsum(d.d_quat * Tensor(probes[1]))
                + tsum(d.d_logscale * Tensor(probes[2])))

    loss = run()
    leaves = [dec.trunk.weights[0], dec.trunk.weights[1],
              dec.head_quat.weights[0]]
    backward(loss, leaves)
    for leaf in leaves:
        idx = sample_indices(leaf.grad, rng, k=15)
        fd = central_diff_sample(lambda: float(run().data), leaf.data, idx,
                                 h=1e-5)
        for i, want in fd.items():
            got = leaf.grad.reshape(-1)[i]
            assert abs(got - want) / max(1.0, abs(got), abs(want)) < 1e-4


# -- apply_delta --------------------------------------------------------------

def _unit_scene(rng, n):
    centers = Tensor(rng.normal(size=(n, 3)))
    scales = Tensor(np.exp(rng.normal(size=(n, 3)) * 0.3))
    quats = Tensor(random_unit_quats(rng, n))
    return centers, scales, quats


def _zero_delta(n):
    return DeformationDelta(Tensor(np.zeros((n, 3))), Tensor(np.zeros((n, 4))),
                            Tensor(np.zeros((n, 3))))


def test_zero_delta_is_fixed_point():
    rng = stream(74, "def.fixed")
    c, s, q = _unit_scene(rng, 6)
    c2, s2, q2, degenerate = apply_delta(c, s, q, _zero_delta(6))
    assert np.array_equal(c2.data, c.data)
    assert np.array_equal(s2.data, s.data)
    assert np.allclose(q2.data, q.data, atol=1e-12)  # renormalization only
    assert not degenerate.any()


def test_translation_delta():
    c = Tensor(np.zeros((1, 3)))
    s = Tensor(np.ones((1, 3)))
    q = Tensor(np.array([[1.0, 0, 0, 0]]))
    delta = _zero_delta(1)
    delta.d_center.data[0] = [1.0, 0.0, 0.0]
    c2, _, _, _ = apply_delta(c, s, q, delta)
    assert np.allclose(c2.data[0], [1.0, 0.0, 0.0], atol=1e-15)


def test_quaternion_offset_renormalizes():
    rng = stream(75, "def.quat")
    q = Tensor(np.array([[1.0, 0, 0, 0]]))
    delta = _zero_delta(1)
    delta.d_quat.data[0] = [0.0, 0.0, 0.0, np.tan(0.35 / 2.0)]
    _, _, q2, degenerate = apply_delta(Tensor(np.zeros((1, 3))),
                                       Tensor(np.ones((1, 3))), q, delta)
    assert not degenerate.any()
    assert abs(np.linalg.norm(q2.data[0]) - 1.0) < 1e-10
    rot = quat_to_rot(q2.data[0])
    assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-9)


def test_degenerate_quaternion_falls_back_to_identity():
    q = Tensor(np.array([[0.6, 0.0, 0.8, 0.0]]))
    delta = _zero_delta(1)
    delta.d_quat.data[0] = [-0.6, 0.0, -0.8, 0.0]  # cancels exactly
    _, _, q2, degenerate = apply_delta(Tensor(np.zeros((1, 3))),
                                       Tensor(np.ones((1, 3))), q, delta)
    assert degenerate[0]
    assert np.allclose(q2.data[0], [1.0, 0, 0, 0], atol=1e-15)


def test_scale_positivity_under_any_delta():
    rng = stream(76, "def.scale")
    c, s, q = _unit_scene(rng, 8)
    delta = _zero_delta(8)
    delta.d_logscale.data[:] = rng.normal(size=(8, 3)) * 5.0
    _, s2, _, _ = apply_delta(c, s, q, delta)
    assert np.all(s2.data > 0.0)


def test_normalize_quats_gradient():
    rng = stream(77, "def.qgrad")
    q = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    probe = rng.normal(size=(3, 4))

    def run():
        out, _ = normalize_quats(q)
        return tsum(out * Tensor(probe))

    loss = run()
    backward(loss, [q])
    idx = sample_indices(q.grad, rng, k=12)
    fd = central_diff_sample(lambda: float(run().data), q.data, idx, h=1e-6)
    for i, want in fd.items():
        got = q.grad.reshape(-1)[i]
        assert abs(got - want) / max(1.0, abs(got), abs(want)) < 1e-4

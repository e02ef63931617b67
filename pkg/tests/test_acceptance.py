"""Shipping gate: the nine package-level criteria, each at its stated tolerance.

Every test prints a single summary line with the measured numbers, so a
verbose run doubles as the acceptance report. Criteria 5 and 6 are full
training runs (minutes, not seconds); their wall-clock budgets are part
of the contract and asserted alongside the quality thresholds.
"""

import dataclasses
import os
import time

import numpy as np
import pytest

import splatfuse.cli as cli
from fd import central_diff_sample, rel_err, sample_indices
from oracle_raster import oracle_render
from scenes import front_camera, random_scene
from splatfuse.ablate import ablate_fusion
from splatfuse.autodiff import Tensor, backward, tsum, mul, add, zero_grad
from splatfuse.config import make_config
from splatfuse.deform import DeformDecoder, apply_delta
from splatfuse.features.attention import AttnEncoders, attention_weights
from splatfuse.features.audio import tone_clip
from splatfuse.features.dsp import AudioConfig, extract_frames, frame_count
from splatfuse.features.planes import (
    FeaturePlanes,
    encode_emotion,
    make_scale_projections,
)
from splatfuse.fusion import (
    StateDistribution,
    aggregate_stacked,
    block_aggregate,
    fuse_pipeline,
    gaussian_fuse,
    make_blocks,
)
from splatfuse.harness import load_dataset, write_dataset
from splatfuse.model import SplatFuseModel
from splatfuse.nn import AdamState, adam_step
from splatfuse.render import rasterize, render
from splatfuse.rng import stream
from splatfuse.training.losses import loss_branch
from splatfuse.training.metrics import evaluate
from splatfuse.training.trainer import render_heldout, train


@pytest.fixture(scope="module")
def default_ds(tmp_path_factory):
    """The default harness dataset shared by the two training criteria."""
    out = tmp_path_factory.mktemp("accept") / "default"
    cfg = make_config()
    write_dataset(out, cfg)
    return load_dataset(out)


# -- criterion 1: rasterizer equals the per-pixel oracle -------------------------


def test_criterion_1_rasterizer_matches_oracle():
    rng = np.random.default_rng(20260818)
    t0 = time.perf_counter()
    worst = 0.0
    for case in range(50):
        n = int(rng.integers(1, 17))
        w = int(rng.integers(4, 33))
        h = int(rng.integers(4, 33))
        scene = random_scene(np.random.default_rng(rng.integers(2**32)), n)
        cam = front_camera(w, h)
        bg = rng.uniform(0.0, 1.0, size=3)
        got = rasterize(scene, cam, bg)
        want = oracle_render(scene, cam, bg)
        worst = max(worst, float(np.max(np.abs(got - want))))
        assert worst < 1e-6, f"case {case}: max channel diff {worst}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    print(f"criterion 1 PASS: 50 scenes, max diff {worst:.2e}, {elapsed:.1f} s")


# -- criterion 2: gradients vs central finite differences ------------------------


def _probe(fn, tensors, rng, bound, k=5):
    """Backward once, then FD-check k entries of every tensor."""
    loss = fn()
    zero_grad(tensors)
    grads = backward(loss, leaves=tensors)
    total, worst = 0, 0.0
    for t, g in zip(tensors, grads):
        idxs = sample_indices(g, rng, k=k)
        fd = central_diff_sample(lambda: float(fn().data), t.data, idxs)
        for i, want in fd.items():
            err = rel_err(g.reshape(-1)[i], want)
            worst = max(worst, err)
            assert err < bound, f"probe {i}: analytic {g.reshape(-1)[i]} fd {want}"
            total += 1
    return total, worst


def test_criterion_2_gradient_suite():
    t0 = time.perf_counter()
    report = []

    # (a) rasterizer parameters, through a random scalar readout
    rng = stream(2026, "accept.grad.raster")
    scene = random_scene(rng, 6)
    cam = front_camera(14, 14)
    bg = rng.uniform(0, 1, size=3)
    wmap = Tensor(rng.normal(size=(14, 14, 3)))
    leaves = [Tensor(a, requires_grad=True) for a in
              (scene.centers, scene.scales, scene.quats,
               scene.opacities, scene.colors)]

    def raster_loss():
        return tsum(mul(render(*leaves, cam, bg), wmap))

    n, worst = _probe(raster_loss, leaves, rng, 1e-3)
    assert n >= 20
    report.append(f"raster {n} probes {worst:.1e}")

    # (b) plane codes through the codebook encoding
    rng = stream(2026, "accept.grad.planes")
    planes = FeaturePlanes.init(rng, base_resolution=8, d_code=4)
    projs = make_scale_projections(rng, d_attn=6, d_code=4)
    f_emo = Tensor(rng.normal(size=6))
    pos = rng.uniform(0.05, 0.95, size=(7, 3))
    wmap = Tensor(rng.normal(size=(7, 12)))

    def plane_loss():
        return tsum(mul(encode_emotion(pos, f_emo, planes, projs), wmap))

    n, worst = _probe(plane_loss, planes.params, rng, 1e-3, k=8)
    assert n >= 20
    report.append(f"planes {n} probes {worst:.1e}")

    # (c) ensemble member weights through aggregation and fusion
    rng = stream(2026, "accept.grad.members")
    blocks = make_blocks(rng, {"f_exp": 6, "f_tone": 5}, state_dim=8,
                         n_members=3, hidden=10, d_state=7,
                         views=("f_exp", "f_tone"))
    prim_state = rng.normal(size=(4, 8))
    feats = {"f_exp": Tensor(rng.normal(size=6)),
             "f_tone": Tensor(rng.normal(size=5))}
    wm = Tensor(rng.normal(size=(4, 7)))
    wv = Tensor(rng.normal(size=(4, 7)))

    def member_loss():
        fused, _ = fuse_pipeline(prim_state, feats, blocks)
        return add(tsum(mul(fused.mean, wm)), tsum(mul(fused.var, wv)))

    member_leaves = [blocks["f_exp"].weights[0], blocks["f_exp"].weights[3],
                     blocks["f_exp"].biases[2], blocks["f_tone"].weights[1],
                     blocks["f_tone"].weights[2]]
    n, worst = _probe(member_loss, member_leaves, rng, 1e-4)
    assert n >= 20
    report.append(f"members {n} probes {worst:.1e}")

    # (d) decoder weights through deformation application
    rng = stream(2026, "accept.grad.decoder")
    decoder = DeformDecoder(7, "face", rng=rng, hidden=12)
    state = Tensor(rng.normal(size=(5, 7)))
    centers = Tensor(rng.normal(size=(5, 3)))
    scales = Tensor(rng.uniform(0.1, 0.5, size=(5, 3)))
    quats = rng.normal(size=(5, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    quats = Tensor(quats)
    wc, ws, wq = (Tensor(rng.normal(size=(5, 3))), Tensor(rng.normal(size=(5, 3))),
                  Tensor(rng.normal(size=(5, 4))))

    def decoder_loss():
        c, s, q, _ = apply_delta(centers, scales, quats, decoder.decode(state))
        return add(add(tsum(mul(c, wc)), tsum(mul(s, ws))), tsum(mul(q, wq)))

    n, worst = _probe(decoder_loss, decoder.params, rng, 1e-4, k=3)
    assert n >= 20
    report.append(f"decoder {n} probes {worst:.1e}")

    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    print(f"criterion 2 PASS: {'; '.join(report)}; {elapsed:.1f} s")


# -- criterion 3: fusion algebra invariants --------------------------------------


def _random_dist(rng, d):
    au = rng.uniform(1e-3, 2.0, size=d)
    eu = rng.uniform(0.0, 2.0, size=d)
    return StateDistribution(mean=Tensor(rng.normal(size=d) * 3.0),
                             var=Tensor(au + eu), eu=Tensor(eu), au=Tensor(au))


def test_criterion_3_fusion_algebra():
    rng = np.random.default_rng(33)
    t0 = time.perf_counter()
    for case in range(1000):
        d = int(rng.integers(1, 6))
        k = int(rng.integers(1, 5))
        views = [_random_dist(rng, d) for _ in range(k)]
        fused = gaussian_fuse(views)

        # precision additivity
        want_precision = np.sum([1.0 / v.var.data for v in views], axis=0)
        assert rel_err(1.0 / fused.var.data, want_precision) < 1e-12
        # mean boundedness
        lo = np.min([v.mean.data for v in views], axis=0)
        hi = np.max([v.mean.data for v in views], axis=0)
        assert np.all(fused.mean.data >= lo - 1e-12)
        assert np.all(fused.mean.data <= hi + 1e-12)
        # permutation invariance
        flipped = gaussian_fuse(views[::-1])
        assert rel_err(fused.mean.data, flipped.mean.data) < 1e-12
        assert rel_err(fused.var.data, flipped.var.data) < 1e-12
        # single-view identity
        alone = gaussian_fuse([views[0]])
        assert rel_err(alone.mean.data, views[0].mean.data) < 1e-12
        assert rel_err(alone.var.data, views[0].var.data) < 1e-12
        # an uninformative view drops out
        noise = StateDistribution(mean=Tensor(rng.normal(size=d) * 3.0),
                                  var=Tensor(np.full(d, 1e12)),
                                  eu=Tensor(np.zeros(d)),
                                  au=Tensor(np.full(d, 1e12)))
        kept = gaussian_fuse(views + [noise])
        assert np.max(np.abs(kept.mean.data - fused.mean.data)) < 1e-3
        assert np.max(np.abs(kept.var.data - fused.var.data)) < 1e-3

    a = StateDistribution(mean=Tensor(np.array([0.0])), var=Tensor(np.array([1.0])),
                          eu=Tensor(np.array([0.0])), au=Tensor(np.array([1.0])))
    b = StateDistribution(mean=Tensor(np.array([3.0])), var=Tensor(np.array([2.0])),
                          eu=Tensor(np.array([0.0])), au=Tensor(np.array([2.0])))
    worked = gaussian_fuse([a, b])
    assert worked.mean.data[0] == 1.0
    assert worked.var.data[0] == 2.0 / 3.0
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    print(f"criterion 3 PASS: 1000 instances, worked example exact, "
          f"{elapsed:.1f} s")


# -- criterion 4: uncertainty decomposition identity ------------------------------


def test_criterion_4_decomposition_identity():
    rng = np.random.default_rng(44)
    for case in range(1000):
        t = int(rng.integers(2, 11))
        d = int(rng.integers(1, 7))
        mu = Tensor(rng.normal(size=(t, d)) * 5.0)
        sigma = Tensor(rng.uniform(0.05, 3.0, size=(t, d)))
        dist = aggregate_stacked(mu, sigma)
        assert np.array_equal(dist.var.data, dist.au.data + dist.eu.data)
        assert np.all(dist.eu.data >= 0.0)

    # weight-identical members carry no ensemble disagreement; the mean of
    # T float copies can differ from the copy by one ulp, so EU lands at
    # the squared-ulp scale (~1e-30), 24 orders below the variance floor
    for t in range(2, 11):
        row_mu = rng.normal(size=5) * 10.0
        row_sigma = rng.uniform(0.1, 2.0, size=5)
        dist = block_aggregate([(row_mu, row_sigma)] * t)
        assert np.max(dist.eu.data) < 1e-24

    worked = block_aggregate([(np.array([0.0]), np.array([1.0])),
                              (np.array([2.0]), np.array([1.0]))])
    assert worked.mean.data[0] == 1.0
    assert worked.eu.data[0] == 1.0
    assert worked.au.data[0] == 1.0
    assert worked.var.data[0] == 2.0
    print("criterion 4 PASS: 1000 ensembles exact, identical members EU < 1e-24")


# -- criterion 7: branch containment ----------------------------------------------


def test_criterion_7_branch_contract(tmp_path):
    cfg = make_config(overrides={
        "frames": "6", "width": "16", "height": "16", "n_face": "8",
        "n_mouth": "4", "n_members": "2", "seed": "13"})
    write_dataset(tmp_path / "ds", cfg)
    ds = load_dataset(tmp_path / "ds")
    model = SplatFuseModel(ds.scene, ds.camera, ds.background, ds.cfg)

    face_bytes = b"".join(p.data.tobytes() for p in model.face.params())
    mouth_params = model.mouth.params()
    state = AdamState.for_params(mouth_params, lr=1e-2)
    sample = ds.frames[0]
    for _ in range(4):
        loss = loss_branch(model.render_branch("mouth", sample),
                           Tensor(sample.mouth_target))
        zero_grad(mouth_params)
        grads = backward(loss, leaves=mouth_params)
        adam_step(mouth_params, grads, state)
    # face gradients of the mouth loss are identically zero as well
    face_grads = backward(
        loss_branch(model.render_branch("mouth", sample),
                    Tensor(sample.mouth_target)),
        leaves=model.face.params())
    assert all(np.all(g == 0.0) for g in face_grads)
    assert b"".join(p.data.tobytes() for p in model.face.params()) == face_bytes

    delta = model.mouth.decoder.decode(Tensor(np.random.default_rng(0)
                                              .normal(size=(4, ds.cfg.d_state))))
    assert not hasattr(model.mouth.decoder, "head_quat")
    assert np.all(delta.d_quat.data == 0.0)
    assert np.all(delta.d_logscale.data == 0.0)
    assert np.any(delta.d_center.data != 0.0)
    print("criterion 7 PASS: face hash unchanged by mouth training, "
          "mouth delta is position-only")


# -- criterion 8: audio DSP checks -------------------------------------------------


def test_criterion_8_audio_dsp():
    cfg = AudioConfig()
    clip = tone_clip(440.0, 1.0)
    frames = extract_frames(clip, cfg)
    want_bin = round(440.0 * cfg.frame_len / cfg.sample_rate)
    bins = np.argmax(frames.spec, axis=1)
    assert np.all(bins == want_bin), f"argmax bins {np.unique(bins)}"

    rng = np.random.default_rng(88)
    for case in range(200):
        frame = int(rng.integers(32, 801))
        hop = int(rng.integers(8, 401))
        n = int(rng.integers(frame, 40001))
        count, i = 0, 0
        while i + frame <= n:
            count += 1
            i += hop
        assert frame_count(n, frame, hop) == count
    for seconds in (0.31, 0.5, 1.27):
        c = tone_clip(330.0, seconds)
        got = extract_frames(c, cfg).spec.shape[0]
        assert got == frame_count(c.samples.shape[0], cfg.frame_len, cfg.hop)

    worst = 0.0
    for seed in range(3):
        enc = AttnEncoders.init(stream(seed, "accept.attn"), n_bins=cfg.n_bins,
                                n_mfcc=cfg.n_mfcc, frame_len=cfg.frame_len)
        w = attention_weights(frames, enc)
        assert w.shape == (frames.n_frames,) and np.all(w >= 0.0)
        worst = max(worst, abs(float(np.sum(w)) - 1.0))
    assert worst < 1e-9
    print(f"criterion 8 PASS: bin {want_bin} on all {frames.n_frames} frames, "
          f"200 grid cases exact, attention sum error {worst:.1e}")


# -- criterion 9: byte-level reproducibility ---------------------------------------


def test_criterion_9_reproducible_pipeline(tmp_path):
    overrides = ["--width", "32", "--height", "32", "--n_face", "40",
                 "--n_mouth", "12", "--frames", "24", "--n_members", "4",
                 "--stage_a_iters", "60", "--stage_b_iters", "20"]
    trees = []
    for tag in ("a", "b"):
        base = tmp_path / tag
        assert cli.main(["synth-scene", "--out", str(base / "data")]
                        + overrides) == 0
        assert cli.main(["train", "--data", str(base / "data"),
                         "--out", str(base / "run"), "--progress", "0"]) == 0
        assert cli.main(["eval", "--data", str(base / "data"),
                         "--ckpt", str(base / "run" / "checkpoint.npz"),
                         "--out", str(base / "eval")]) == 0
        tree = {}
        for dirpath, _, names in os.walk(base):
            for name in names:
                if name.endswith((".ppm", ".csv", ".txt", ".wav")):
                    path = os.path.join(dirpath, name)
                    tree[os.path.relpath(path, base)] = open(path, "rb").read()
        trees.append(tree)
    first, second = trees
    assert first.keys() == second.keys()
    checked = 0
    for name in first:
        assert first[name] == second[name], f"{name} differs between runs"
        checked += 1
    print(f"criterion 9 PASS: {checked} artifacts byte-identical across runs")


# -- criterion 5: end-to-end reconstruction quality ---------------------------------


def test_criterion_5_end_to_end_reconstruction(default_ds):
    ds = default_ds
    cfg = ds.cfg
    t0 = time.perf_counter()
    model = SplatFuseModel(ds.scene, ds.camera, ds.background, cfg)
    train(model, ds, cfg)
    report = evaluate(render_heldout(model, ds, cfg))
    elapsed = time.perf_counter() - t0
    assert len(report.frames) == 20
    assert report.mean_psnr >= 25.0, f"held-out PSNR {report.mean_psnr:.2f} dB"
    assert report.mean_ssim >= 0.85, f"held-out SSIM {report.mean_ssim:.4f}"
    assert elapsed < 1800.0
    print(f"criterion 5 PASS: PSNR {report.mean_psnr:.2f} dB, "
          f"SSIM {report.mean_ssim:.4f}, {elapsed / 60:.1f} min")


# -- criterion 6: uncertainty fusion vs uniform fusion -------------------------------


def test_criterion_6_ablation_direction(default_ds):
    ds = default_ds
    cfg = dataclasses.replace(ds.cfg, corrupt_view="f_tone", corrupt_sigma=1.0)
    t0 = time.perf_counter()
    report = ablate_fusion(ds, cfg)
    elapsed = time.perf_counter() - t0
    assert report.corrupt_margin >= 0.3, (
        f"corrupted margin {report.corrupt_margin:+.3f} dB")
    assert report.clean_margin >= -0.3, (
        f"clean regression {report.clean_margin:+.3f} dB")
    assert elapsed < 7200.0
    print(f"criterion 6 PASS: corrupted {report.corrupt_margin:+.2f} dB, "
          f"clean {report.clean_margin:+.2f} dB, {elapsed / 60:.1f} min")

"""Two-stage optimization over the branch pipelines.

Stage A fits each branch independently against its own mask render, so
the branches stay provably decoupled. Stage B fine-tunes everything
jointly against the fused frame under the stage-two loss. Frames are
visited in a fixed cyclic order and all randomness flows through named
seed streams, which is what makes reruns bit-identical.
"""

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, backward, zero_grad
from ..features.synth import EXP_DIM, TONE_DIM
from ..nn import AdamState, adam_step
from ..rng import stream
from .losses import loss_branch, loss_fuse

NOISE_DIMS = {"f_exp": EXP_DIM, "f_tone": TONE_DIM}


class DivergenceError(RuntimeError):
    """Loss went non-finite; carries the stage and iteration it died at."""

    def __init__(self, stage: str, iteration: int, value: float):
        super().__init__(
            f"training diverged at stage {stage} iteration {iteration}: loss={value}"
        )
        self.stage = stage
        self.iteration = iteration
        self.value = value


@dataclass
class TraceRow:
    stage: str      # "A" or "B"
    iteration: int  # global step index, shared by both stages
    branch: str     # "face", "mouth", or "joint"
    loss: float


@dataclass
class TrainResult:
    trace: list
    final_loss: float


def train_noise(cfg, iteration: int):
    """Per-iteration corruption of one conditioning view, or None.

    The stream name depends on seed and iteration but not on the fusion
    mode, so uncertainty and uniform runs see identical corruption.
    """
    if not cfg.corrupt_view:
        return None
    dim = NOISE_DIMS.get(cfg.corrupt_view)
    if dim is None:
        raise ValueError(f"cannot corrupt view {cfg.corrupt_view!r}")
    rng = stream(cfg.seed, f"corrupt.{cfg.corrupt_view}.{iteration}")
    return (cfg.corrupt_view, cfg.corrupt_sigma * rng.normal(size=dim))


def eval_noise(cfg, frame: int):
    """Frame-locked corruption used at evaluation time, or None."""
    if not cfg.corrupt_view:
        return None
    dim = NOISE_DIMS[cfg.corrupt_view]
    rng = stream(cfg.seed, f"corrupt.{cfg.corrupt_view}.eval.{frame}")
    return (cfg.corrupt_view, cfg.corrupt_sigma * rng.normal(size=dim))


def _groups(params, plane_params, lr: float, lr_planes: float):
    """Split one branch's parameters into (tensors, AdamState) groups.

    The dense plane grids train well with a larger step than the MLPs,
    so they get their own optimizer state.
    """
    plane_ids = {id(p) for p in plane_params}
    planes = [p for p in params if id(p) in plane_ids]
    rest = [p for p in params if id(p) not in plane_ids]
    out = []
    if planes:
        out.append((planes, AdamState.for_params(planes, lr=lr_planes)))
    out.append((rest, AdamState.for_params(rest, lr=lr)))
    return out


def _apply(loss, groups, stage: str, iteration: int):
    value = float(loss.data)
    if not np.isfinite(value):
        raise DivergenceError(stage, iteration, value)
    everything = [p for tensors, _ in groups for p in tensors]
    zero_grad(everything)
    grads = backward(loss, leaves=everything)
    at = 0
    for tensors, state in groups:
        adam_step(tensors, grads[at:at + len(tensors)], state)
        at += len(tensors)
    return value


def train(model, dataset, cfg, progress=None) -> TrainResult:
    """Run stage A then stage B; returns the loss trace.

    Mutates the model parameters in place. `progress`, when given, is
    called as progress(stage, iteration, loss) after every step.
    """
    frames = dataset.train_frames()
    if not frames:
        raise ValueError("dataset has no training frames")

    trace = []
    final_loss = float("nan")

    face_groups = _groups(model.face.params(), model.face.plane_params(),
                          cfg.lr, cfg.lr_planes)
    mouth_groups = _groups(model.mouth.params(), model.mouth.plane_params(),
                           cfg.lr, cfg.lr_planes)

    for it in range(cfg.stage_a_iters):
        sample = frames[it % len(frames)]
        noise = train_noise(cfg, it)

        f_emo = model.emotion_context(dataset.clip_frames)
        face_img = model.render_branch("face", sample, f_emo, noise)
        face_loss = loss_branch(face_img, Tensor(sample.face_target), lam=cfg.lam)
        value = _apply(face_loss, face_groups, "A", it)
        trace.append(TraceRow("A", it, "face", value))
        if progress:
            progress("A", it, value)

        mouth_img = model.render_branch("mouth", sample, noise=noise)
        mouth_loss = loss_branch(mouth_img, Tensor(sample.mouth_target), lam=cfg.lam)
        value = _apply(mouth_loss, mouth_groups, "A", it)
        trace.append(TraceRow("A", it, "mouth", value))
        final_loss = value

    joint_groups = _groups(model.params(),
                           model.face.plane_params(), cfg.lr, cfg.lr_planes)
    for it in range(cfg.stage_b_iters):
        step = cfg.stage_a_iters + it
        sample = frames[step % len(frames)]
        noise = train_noise(cfg, step)
        f_emo = model.emotion_context(dataset.clip_frames)
        img = model.render_full(sample, f_emo, noise)
        loss = loss_fuse(img, Tensor(sample.target), lam=cfg.lam, gamma=cfg.gamma)
        value = _apply(loss, joint_groups, "B", step)
        trace.append(TraceRow("B", step, "joint", value))
        final_loss = value
        if progress:
            progress("B", step, value)

    return TrainResult(trace=trace, final_loss=final_loss)


def render_heldout(model, dataset, cfg):
    """(frame, rendered, target) triples for every held-out frame."""
    items = []
    heldout = dataset.heldout_frames()
    if not heldout:
        raise ValueError("dataset has no held-out frames")
    f_emo = model.emotion_context(dataset.clip_frames)
    for sample in heldout:
        noise = eval_noise(cfg, sample.index)
        img = model.render_full(sample, f_emo, noise)
        items.append((sample.index, img.data, sample.target))
    return items


def write_trace(path, trace):
    lines = ["stage,iteration,branch,loss"]
    for row in trace:
        lines.append("%s,%d,%s,%.17g" % (row.stage, row.iteration, row.branch, row.loss))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def save_checkpoint(path, model):
    arrays = {name: p.data for name, p in model.named_params()}
    np.savez(path, **arrays)


def load_checkpoint(path, model):
    with np.load(path) as arrays:
        names = set(arrays.files)
        expected = [name for name, _ in model.named_params()]
        missing = set(expected) - names
        extra = names - set(expected)
        if missing or extra:
            raise ValueError(
                f"checkpoint mismatch: missing={sorted(missing)} extra={sorted(extra)}"
            )
        for name, p in model.named_params():
            stored = arrays[name]
            if stored.shape != p.data.shape:
                raise ValueError(
                    f"checkpoint {name}: shape {stored.shape} != {p.data.shape}"
                )
            p.data = stored.astype(np.float64)

"""Conditional deformation model: one independent pipeline per branch.

The canonical primitives (geometry, opacity, color) are fixed; training
shapes only the mapping from per-frame conditioning features to
per-primitive deformations. Each branch owns its full parameter set,
including its own audio projection, so the two branches share nothing:
a training step on one provably cannot move the other.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, matmul
from .config import RunConfig
from .deform import DeformDecoder, apply_delta
from .features.attention import AttnEncoders, attn_reweight
from .features.dsp import AudioConfig
from .features.planes import FeaturePlanes, encode_emotion, make_scale_projections
from .features.synth import EXP_DIM, TONE_DIM, synth_features
from .fusion import FACE_VIEWS, MOUTH_VIEWS, fuse_pipeline, make_blocks
from .render import Scene, render
from .rng import stream

D_AUDIO = 32
STATE_DIM = 10  # center (3) + scale (3) + quat (4)
CENTER_NORM = 0.8  # scene fits in this box half-width; states land near [-1, 1]


@dataclass
class BranchModel:
    """Everything one branch owns: blocks, decoder, and feature encoders."""

    branch: str
    views: tuple
    blocks: dict
    decoder: DeformDecoder
    audio_proj: Tensor                 # (8 * n_mfcc, D_AUDIO)
    planes: FeaturePlanes = None       # face only
    scale_projs: dict = None
    attn: AttnEncoders = None

    def named_params(self):
        """Stable (name, tensor) ordering used by Adam and checkpoints."""
        out = []
        for view in self.views:
            block = self.blocks[view]
            for i, w in enumerate(block.weights):
                out.append((f"{self.branch}.block.{view}.w{i}", w))
            for i, b in enumerate(block.biases):
                out.append((f"{self.branch}.block.{view}.b{i}", b))
        for i, w in enumerate(self.decoder.params):
            out.append((f"{self.branch}.decoder.p{i}", w))
        out.append((f"{self.branch}.audio_proj", self.audio_proj))
        if self.planes is not None:
            for s in self.planes.scales:
                out.append((f"{self.branch}.planes.s{s}", self.planes.planes[s]))
            for s, proj in sorted(self.scale_projs.items()):
                for i, p in enumerate(proj.params):
                    out.append((f"{self.branch}.scale_proj.s{s}.p{i}", p))
            for i, p in enumerate(self.attn.params):
                out.append((f"{self.branch}.attn.p{i}", p))
        return out

    def params(self):
        return [p for _, p in self.named_params()]

    def plane_params(self):
        return [] if self.planes is None else self.planes.params


def _build_branch(branch: str, seed: int, cfg: RunConfig) -> BranchModel:
    rng = stream(seed, f"model.{branch}")
    acfg = AudioConfig()
    views = FACE_VIEWS if branch == "face" else MOUTH_VIEWS
    planes = scale_projs = attn = None
    view_dims = {"f_audio": D_AUDIO, "f_exp": EXP_DIM, "f_tone": TONE_DIM}
    if branch == "face":
        planes = FeaturePlanes.init(rng)
        attn = AttnEncoders.init(rng, n_bins=acfg.n_bins, n_mfcc=acfg.n_mfcc,
                                 frame_len=acfg.frame_len)
        scale_projs = make_scale_projections(rng, d_attn=16, d_code=planes.d_code)
        view_dims["f_emotion"] = len(planes.scales) * planes.d_code
    blocks = make_blocks(rng, view_dims, STATE_DIM, n_members=cfg.n_members,
                         hidden=cfg.hidden, d_state=cfg.d_state, views=views)
    decoder = DeformDecoder(cfg.d_state, branch, rng=rng, hidden=cfg.hidden,
                            head_gain=cfg.head_gain)
    window_dim = 8 * acfg.n_mfcc
    audio_proj = Tensor(
        rng.uniform(-1.0, 1.0, size=(window_dim, D_AUDIO)) * np.sqrt(6.0 / (window_dim + D_AUDIO)),
        requires_grad=True,
    )
    return BranchModel(branch=branch, views=views, blocks=blocks, decoder=decoder,
                       audio_proj=audio_proj, planes=planes,
                       scale_projs=scale_projs, attn=attn)


class SplatFuseModel:
    """Two branch pipelines over one canonical scene and camera."""

    def __init__(self, scene: Scene, camera, background, cfg: RunConfig):
        self.scene = scene
        self.camera = camera
        self.background = np.asarray(background, dtype=np.float64)
        self.cfg = cfg
        self.face = _build_branch("face", cfg.seed, cfg)
        self.mouth = _build_branch("mouth", cfg.seed, cfg)
        self._cache = {}
        for branch in ("face", "mouth"):
            mask = scene.mask(branch)
            centers = scene.centers[mask]
            state = np.concatenate(
                [centers / CENTER_NORM, scene.scales[mask], scene.quats[mask]],
                axis=1,
            )
            self._cache[branch] = {
                "mask": mask,
                "centers": Tensor(centers),
                "scales": Tensor(scene.scales[mask]),
                "quats": Tensor(scene.quats[mask]),
                "opacities": Tensor(scene.opacities[mask]),
                "colors": Tensor(scene.colors[mask]),
                "state": state,
                # tri-plane lookups expect positions in the unit cube
                "positions": np.clip(centers / CENTER_NORM * 0.5 + 0.5, 0.0, 1.0),
            }

    def branch_model(self, branch: str) -> BranchModel:
        return self.face if branch == "face" else self.mouth

    def emotion_context(self, clip_frames) -> Tensor:
        """Clip-level attention summary feeding the tri-plane projections."""
        return attn_reweight(clip_frames, self.face.attn)

    def frame_features(self, branch: str, sample, f_emo_attn=None,
                       noise=None) -> dict:
        """Per-view conditioning tensors for one frame.

        noise, when given, is a (view_name, vector) pair added to that
        view's input feature; the ablation harness uses it to corrupt
        one conditioning stream while leaving the rest untouched.
        """
        bm = self.branch_model(branch)
        synth = synth_features(sample.index, sample.drive, self.cfg.seed)
        if noise is not None:
            view, vec = noise
            if view not in synth:
                raise ValueError(f"cannot corrupt unknown view {view!r}")
            synth[view] = synth[view] + vec
        features = {
            "f_audio": matmul(Tensor(sample.mfcc_window), bm.audio_proj),
            "f_exp": Tensor(synth["f_exp"]),
            "f_tone": Tensor(synth["f_tone"]),
        }
        if branch == "face":
            if f_emo_attn is None:
                raise ValueError("face branch needs the clip-level emotion context")
            features["f_emotion"] = encode_emotion(
                self._cache["face"]["positions"], f_emo_attn,
                bm.planes, bm.scale_projs,
            )
        return features

    def deform_branch(self, branch: str, sample, f_emo_attn=None,
                      noise=None, mode: str = None):
        """Deformed geometry tensors (centers, scales, quats) for one frame."""
        mode = mode if mode is not None else self.cfg.fusion_mode
        bm = self.branch_model(branch)
        cache = self._cache[branch]
        features = self.frame_features(branch, sample, f_emo_attn, noise)
        fused, dists = fuse_pipeline(cache["state"], features, bm.blocks, mode=mode)
        delta = bm.decoder.decode(fused.mean)
        centers, scales, quats, _ = apply_delta(
            cache["centers"], cache["scales"], cache["quats"], delta
        )
        return centers, scales, quats, dists

    def render_branch(self, branch: str, sample, f_emo_attn=None,
                      noise=None, mode: str = None) -> Tensor:
        """Deformed branch rendered alone, matching its mask target."""
        cache = self._cache[branch]
        centers, scales, quats, _ = self.deform_branch(
            branch, sample, f_emo_attn, noise, mode
        )
        return render(centers, scales, quats, cache["opacities"],
                      cache["colors"], self.camera, self.background)

    def render_full(self, sample, f_emo_attn=None, noise=None,
                    mode: str = None) -> Tensor:
        """Both deformed branches composited in one rasterization."""
        parts = [
            self.deform_branch(b, sample, f_emo_attn, noise, mode)[:3]
            for b in ("face", "mouth")
        ]
        centers = concat([parts[0][0], parts[1][0]], axis=0)
        scales = concat([parts[0][1], parts[1][1]], axis=0)
        quats = concat([parts[0][2], parts[1][2]], axis=0)
        opacities = concat(
            [self._cache["face"]["opacities"], self._cache["mouth"]["opacities"]], axis=0
        )
        colors = concat(
            [self._cache["face"]["colors"], self._cache["mouth"]["colors"]], axis=0
        )
        return render(centers, scales, quats, opacities, colors,
                      self.camera, self.background)

    def named_params(self):
        return self.face.named_params() + self.mouth.named_params()

    def params(self):
        return self.face.params() + self.mouth.params()

"""Synthetic desk-scale data: a two-branch head scene with scripted motion.

The scene is an ellipsoid shell of face primitives with an opening at the
mouth region, plus a band of mouth primitives set deeper so the shell
occludes their rim. A scalar drive signal animates both branches with a
known script (mouth translation, gentle head rotation), giving ground
truth a small deformation model can actually reach. Frames, per-branch
mask renders, the driving audio, and the canonical scene all land on disk
in deterministic formats so repeated runs are byte-identical.
"""

import os
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, read_config, write_config
from .features.audio import AudioClip, load_wav, save_wav, tone_clip
from .features.dsp import AudioConfig, extract_frames
from .render import Camera, Scene, load_snapshot, rasterize, read_ppm, save_snapshot, write_ppm
from .rng import stream

MOUTH_SHIFT = 0.22          # peak mouth translation along +y (screen down)
FACE_SWING = 0.5            # peak-to-peak head rotation about y, radians
FACE_RADII = (0.55, 0.72, 0.45)
MOUTH_WINDOW_X = 0.28       # shell opening half-width
MOUTH_WINDOW_Y = (0.08, 0.58)
AUDIO_HOPS_PER_FRAME = 4    # 10 ms hop vs 25 fps video


def drive_signal(frame: int, period: int) -> float:
    """Scalar animation control in [0, 1]; phase zero gives exactly 0.5."""
    return 0.5 + 0.5 * np.sin(2.0 * np.pi * frame / period)


def quat_multiply(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Hamilton product for scalar-first quaternions, batched on p."""
    qw, qx, qy, qz = q
    pw, px, py, pz = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    return np.stack(
        [
            qw * pw - qx * px - qy * py - qz * pz,
            qw * px + qx * pw + qy * pz - qz * py,
            qw * py - qx * pz + qy * pw + qz * px,
            qw * pz + qx * py - qy * px + qz * pw,
        ],
        axis=-1,
    )


def _unit_quats(rng, n: int) -> np.ndarray:
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _in_mouth_window(p: np.ndarray) -> bool:
    return (
        p[2] < 0.0
        and abs(p[0]) < MOUTH_WINDOW_X
        and MOUTH_WINDOW_Y[0] < p[1] < MOUTH_WINDOW_Y[1]
    )


def make_scene(seed: int, n_face: int = 160, n_mouth: int = 40) -> Scene:
    """Canonical (undeformed) two-branch head scene."""
    rng = stream(seed, "scene")
    radii = np.asarray(FACE_RADII)

    centers = []
    while len(centers) < n_face:
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        p = u * radii * rng.uniform(0.97, 1.03)
        if _in_mouth_window(p):
            continue  # leave the shell open where the mouth shows through
        centers.append(p)
    face_centers = np.asarray(centers)
    face_scales = np.clip(
        rng.uniform(0.05, 0.10, size=(n_face, 1)) * rng.uniform(0.6, 1.4, size=(n_face, 3)),
        0.02,
        None,
    )
    face_quats = _unit_quats(rng, n_face)
    face_colors = np.clip(
        np.array([0.75, 0.55, 0.45]) + rng.uniform(-0.15, 0.15, size=(n_face, 3)),
        0.05,
        0.95,
    )
    face_op = rng.uniform(0.55, 0.9, size=n_face)

    mouth_centers = np.column_stack(
        [
            rng.uniform(-0.24, 0.24, size=n_mouth),
            rng.uniform(0.14, 0.34, size=n_mouth),
            rng.uniform(-0.18, -0.05, size=n_mouth),  # deeper than the shell front
        ]
    )
    mouth_scales = np.clip(
        rng.uniform(0.035, 0.07, size=(n_mouth, 1)) * rng.uniform(0.7, 1.3, size=(n_mouth, 3)),
        0.02,
        None,
    )
    mouth_quats = _unit_quats(rng, n_mouth)
    mouth_colors = np.clip(
        np.array([0.70, 0.25, 0.30]) + rng.uniform(-0.1, 0.1, size=(n_mouth, 3)),
        0.05,
        0.95,
    )
    mouth_op = rng.uniform(0.7, 0.95, size=n_mouth)

    return Scene(
        centers=np.concatenate([face_centers, mouth_centers]),
        scales=np.concatenate([face_scales, mouth_scales]),
        quats=np.concatenate([face_quats, mouth_quats]),
        opacities=np.concatenate([face_op, mouth_op]),
        colors=np.concatenate([face_colors, mouth_colors]),
        branches=["face"] * n_face + ["mouth"] * n_mouth,
    )


def scripted_deformation(scene: Scene, drive: float):
    """Ground-truth per-frame geometry: (centers, quats); scales are static.

    The mouth band translates along +y proportionally to the drive; the
    face shell rotates about the y axis by an angle centred on drive 0.5.
    """
    centers = scene.centers.copy()
    quats = scene.quats.copy()
    face = scene.mask("face")
    mouth = scene.mask("mouth")

    centers[mouth] = centers[mouth] + np.array([0.0, MOUTH_SHIFT * drive, 0.0])

    theta = FACE_SWING * (drive - 0.5)
    c, s = np.cos(theta), np.sin(theta)
    rot_y = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    centers[face] = centers[face] @ rot_y.T
    q_rot = np.array([np.cos(theta / 2.0), 0.0, np.sin(theta / 2.0), 0.0])
    quats[face] = quat_multiply(q_rot, quats[face])
    return centers, quats


def _deformed_scene(scene: Scene, drive: float) -> Scene:
    centers, quats = scripted_deformation(scene, drive)
    return Scene(
        centers=centers,
        scales=scene.scales,
        quats=quats,
        opacities=scene.opacities,
        colors=scene.colors,
        branches=list(scene.branches),
    )


def _subset(scene: Scene, mask: np.ndarray) -> Scene:
    return Scene(
        centers=scene.centers[mask],
        scales=scene.scales[mask],
        quats=scene.quats[mask],
        opacities=scene.opacities[mask],
        colors=scene.colors[mask],
        branches=[b for b, keep in zip(scene.branches, mask) if keep],
    )


def harness_camera(cfg: RunConfig) -> Camera:
    return Camera.front_at(
        distance=cfg.distance,
        width=cfg.width,
        height=cfg.height,
        focal=cfg.resolved_focal(),
    )


def is_held_out(frame: int, holdout_every: int) -> bool:
    return frame % holdout_every == holdout_every - 1


def synth_audio(cfg: RunConfig) -> AudioClip:
    """Drive-modulated tone long enough to cover every video frame's window."""
    acfg = AudioConfig()
    n_samples = (AUDIO_HOPS_PER_FRAME * cfg.frames + 7) * acfg.hop + acfg.frame_len
    t = np.arange(n_samples) / acfg.sample_rate
    phase = 2.0 * np.pi * t * cfg.fps / cfg.period
    envelope = 0.15 + 0.6 * (0.5 + 0.5 * np.sin(phase))
    return tone_clip(cfg.tone_freq, n_samples / acfg.sample_rate,
                     acfg.sample_rate, amplitude=envelope)


def write_dataset(out_dir, cfg: RunConfig) -> int:
    """Generate scene, frames, masks, audio, and the resolved config.

    Returns the number of frames written. Every output format is
    deterministic, so identical configs produce byte-identical trees.
    """
    if cfg.frames <= 0:
        raise ValueError("frames must be positive")
    os.makedirs(out_dir, exist_ok=True)
    frames_dir = os.path.join(out_dir, "frames")
    os.makedirs(frames_dir, exist_ok=True)

    scene = make_scene(cfg.seed, cfg.n_face, cfg.n_mouth)
    camera = harness_camera(cfg)
    background = np.full(3, cfg.background)

    save_snapshot(scene, os.path.join(out_dir, "scene.txt"))
    write_config(os.path.join(out_dir, "config.txt"), cfg)

    if cfg.audio:
        clip = load_wav(cfg.audio)
    else:
        clip = synth_audio(cfg)
    save_wav(clip, os.path.join(out_dir, "audio.wav"))

    drive_lines = ["# frame drive held_out"]
    for f in range(cfg.frames):
        d = drive_signal(f, cfg.period)
        deformed = _deformed_scene(scene, d)
        target = rasterize(deformed, camera, background)
        face_img = rasterize(_subset(deformed, scene.mask("face")), camera, background)
        mouth_img = rasterize(_subset(deformed, scene.mask("mouth")), camera, background)
        write_ppm(target, os.path.join(frames_dir, "frame_%04d.ppm" % f))
        write_ppm(face_img, os.path.join(frames_dir, "frame_%04d_face.ppm" % f))
        write_ppm(mouth_img, os.path.join(frames_dir, "frame_%04d_mouth.ppm" % f))
        drive_lines.append(
            "%d %.17g %d" % (f, d, int(is_held_out(f, cfg.holdout_every)))
        )
    with open(os.path.join(out_dir, "drives.txt"), "w") as fh:
        fh.write("\n".join(drive_lines) + "\n")
    return cfg.frames


@dataclass
class FrameSample:
    """One video frame: target images plus its per-frame conditioning."""

    index: int
    drive: float
    held_out: bool
    target: np.ndarray       # (H, W, 3) fused ground truth
    face_target: np.ndarray  # face branch rendered alone
    mouth_target: np.ndarray
    mfcc_window: np.ndarray  # (8 * n_mfcc,) audio context for this frame


@dataclass
class Dataset:
    cfg: RunConfig
    scene: Scene
    camera: Camera
    background: np.ndarray
    frames: list
    clip_frames: object      # FrameFeatures over the whole clip (attention input)

    def train_frames(self):
        return [s for s in self.frames if not s.held_out]

    def heldout_frames(self):
        return [s for s in self.frames if s.held_out]


def mfcc_window(mfcc: np.ndarray, frame: int) -> np.ndarray:
    """Eight consecutive audio frames aligned to one video frame, flattened."""
    start = AUDIO_HOPS_PER_FRAME * frame
    window = mfcc[start:start + 8]
    if window.shape[0] < 8:  # clip ran out; repeat the last frame
        pad = np.repeat(window[-1:], 8 - window.shape[0], axis=0)
        window = np.concatenate([window, pad])
    return window.reshape(-1)


def load_dataset(data_dir) -> Dataset:
    cfg = read_config(os.path.join(data_dir, "config.txt"))
    scene = load_snapshot(os.path.join(data_dir, "scene.txt"))
    camera = harness_camera(cfg)
    clip = load_wav(os.path.join(data_dir, "audio.wav"))
    clip_frames = extract_frames(clip, AudioConfig())

    samples = []
    with open(os.path.join(data_dir, "drives.txt")) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            f_str, d_str, held_str = line.split()
            f = int(f_str)
            prefix = os.path.join(data_dir, "frames", "frame_%04d" % f)
            samples.append(
                FrameSample(
                    index=f,
                    drive=float(d_str),
                    held_out=bool(int(held_str)),
                    target=read_ppm(prefix + ".ppm"),
                    face_target=read_ppm(prefix + "_face.ppm"),
                    mouth_target=read_ppm(prefix + "_mouth.ppm"),
                    mfcc_window=mfcc_window(clip_frames.mfcc, f),
                )
            )
    if not samples:
        raise ValueError(f"dataset at {data_dir} contains no frames")
    return Dataset(
        cfg=cfg,
        scene=scene,
        camera=camera,
        background=np.full(3, cfg.background),
        frames=samples,
        clip_frames=clip_frames,
    )

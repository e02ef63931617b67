"""Synthetic stand-ins for the expression / tone / audio view features.

Everything is a deterministic function of (seed, frame, drive): the
expression view is a fixed random basis applied to smooth functions of
the drive signal, the tone view is one constant per-identity vector,
and the audio view (when no real audio pipeline supplies it) is a
seeded random walk over frames.
"""

import numpy as np

from ..rng import stream

EXP_DIM = 64
TONE_DIM = 32
AUDIO_DIM = 32
TONE_SCALE = 0.5
WALK_STEP = 0.1


def drive_basis(drive: float) -> np.ndarray:
    """Smooth scalar functions of the drive signal, shape (4,)."""
    d = float(drive)
    return np.array([d, d * d, np.sin(np.pi * d), np.cos(np.pi * d)])


def synth_features(frame: int, drive: float, seed: int,
                   exp_dim: int = EXP_DIM, tone_dim: int = TONE_DIM,
                   audio_dim: int = AUDIO_DIM) -> dict:
    """{f_exp, f_tone, f_audio} numpy vectors for one frame."""
    basis = stream(seed, "feat.exp.basis").normal(size=(exp_dim, 4))
    f_exp = basis @ drive_basis(drive)
    f_tone = TONE_SCALE * stream(seed, "feat.tone").normal(size=tone_dim)
    steps = stream(seed, "feat.audio.walk").normal(size=(frame + 1, audio_dim))
    f_audio = WALK_STEP * steps.sum(axis=0)
    return {"f_exp": f_exp, "f_tone": f_tone, "f_audio": f_audio}

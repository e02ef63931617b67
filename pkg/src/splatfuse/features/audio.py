"""WAV loading and synthetic test tones.

Only RIFF/WAVE PCM 16-bit is accepted; stereo is averaged to mono and
samples are scaled by 1/32768 into [-1, 1].
"""

import wave
from dataclasses import dataclass

import numpy as np

SAMPLE_RATES = (16000, 22050, 44100)


@dataclass
class AudioClip:
    samples: np.ndarray  # mono, float64 in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if self.sample_rate not in SAMPLE_RATES:
            raise ValueError(f"sample rate must be one of {SAMPLE_RATES}")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def load_wav(path) -> AudioClip:
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getcomptype() != "NONE":
                raise ValueError(f"unsupported codec {fh.getcomptype()!r}")
            if fh.getsampwidth() != 2:
                raise ValueError("only PCM 16-bit WAV is supported")
            channels = fh.getnchannels()
            if channels not in (1, 2):
                raise ValueError(f"expected mono or stereo, got {channels}")
            n = fh.getnframes()
            if n == 0:
                raise ValueError("empty WAV payload")
            rate = fh.getframerate()
            raw = fh.readframes(n)
    except wave.Error as exc:
        raise ValueError(f"malformed WAV file: {exc}") from exc
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels == 2:
        data = data.reshape(-1, 2).mean(axis=1)
    return AudioClip(data, rate)


def save_wav(clip: AudioClip, path) -> None:
    """Write a mono PCM16 file (used by the synthetic harness)."""
    pcm = np.clip(np.rint(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(clip.sample_rate)
        fh.writeframes(pcm.tobytes())


def tone_clip(freq: float, seconds: float, sample_rate: int = 16000,
              amplitude=0.8) -> AudioClip:
    """Pure sine tone; amplitude may be a scalar or a per-sample envelope."""
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return AudioClip(amplitude * np.sin(2.0 * np.pi * freq * t), sample_rate)

"""Frame-level audio DSP: log power spectrogram, mel filterbank, MFCC.

Conventions: periodic Hann window, FFT length equal to the frame length,
HTK-style mel scale with triangular filters spanning 0 Hz to Nyquist,
orthonormal DCT-II for the cepstrum. Power values are floored at 1e-10
before the log.
"""

from dataclasses import dataclass

import numpy as np

LOG_FLOOR = 1e-10


@dataclass
class AudioConfig:
    sample_rate: int = 16000
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 26
    n_mfcc: int = 13

    @property
    def frame_len(self) -> int:
        return int(round(self.sample_rate * self.frame_ms / 1000.0))

    @property
    def hop(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1


@dataclass
class FrameFeatures:
    spec: np.ndarray       # (F, n_bins) log power spectrogram
    mfcc: np.ndarray       # (F, n_mfcc)
    frames: np.ndarray     # (F, frame_len) raw windows, for the wav embedding
    wav_embed: np.ndarray = None  # (F, D_wav) when a projection was supplied

    @property
    def n_frames(self) -> int:
        return self.spec.shape[0]


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    if n_samples < frame_len:
        raise ValueError("clip shorter than one frame")
    return (n_samples - frame_len) // hop + 1


def hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """(n_mels, n_fft//2+1) triangular filters on the HTK mel scale."""
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges = from_mel(np.linspace(to_mel(0.0), to_mel(sample_rate / 2.0),
                                 n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    fb = np.zeros((n_mels, bin_hz.size))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def dct2_ortho_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are output coefficients."""
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    basis = np.cos(np.pi * k * (2 * m + 1) / (2.0 * n)) * np.sqrt(2.0 / n)
    basis[0] *= np.sqrt(0.5)
    return basis


def extract_frames(clip, cfg: AudioConfig, wav_proj=None) -> FrameFeatures:
    """Slice a clip into frames and compute the per-frame streams.

    wav_proj, when given, is a (frame_len, D_wav) matrix whose product
    with the raw frames fills the wav embedding stream; it is a learned
    parameter owned by the attention encoders, so the differentiable
    path recomputes the product as a graph op from .frames.
    """
    flen, hop = cfg.frame_len, cfg.hop
    n_frames = frame_count(clip.samples.size, flen, hop)
    idx = np.arange(n_frames)[:, None] * hop + np.arange(flen)[None, :]
    frames = clip.samples[idx]

    window = hann_periodic(flen)
    power = np.abs(np.fft.rfft(frames * window, n=flen, axis=1)) ** 2
    spec = np.log(np.maximum(power, LOG_FLOOR))

    fb = mel_filterbank(cfg.sample_rate, flen, cfg.n_mels)
    logmel = np.log(np.maximum(power @ fb.T, LOG_FLOOR))
    mfcc = logmel @ dct2_ortho_matrix(cfg.n_mels)[:cfg.n_mfcc].T

    wav_embed = frames @ wav_proj if wav_proj is not None else None
    return FrameFeatures(spec=spec, mfcc=mfcc, frames=frames,
                         wav_embed=wav_embed)


def write_feature_table(path, rows: np.ndarray) -> None:
    """Plain-text dump, one line per frame: index then the vector."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    with open(path, "w") as fh:
        fh.write(f"# frames={rows.shape[0]} dim={rows.shape[1]}\n")
        for i, row in enumerate(rows):
            fh.write(str(i) + " " + " ".join("%.17g" % v for v in row) + "\n")


def read_feature_table(path) -> np.ndarray:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = line.split()
            out.append([float(v) for v in vals[1:]])
    return np.array(out)

"""Attention re-weighting of per-frame wav embeddings.

Spectrogram and MFCC rows are encoded into shared-dimension keys; a
learned query scores each frame, softmax over frames gives the weights,
and the weighted sum of wav-window embeddings is projected down to the
clip-level pre-encoding emotion feature.
"""

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, add, matmul, mul, softmax
from ..nn import MlpBlock, uniform_init
from .dsp import FrameFeatures


@dataclass
class AttnEncoders:
    enc_spec: MlpBlock     # spectrogram row -> key
    enc_mfcc: MlpBlock     # MFCC row -> key
    query: Tensor          # (d_key,)
    wav_proj: Tensor       # (frame_len, d_wav)
    out_proj: Tensor       # (d_wav, d_attn)

    @classmethod
    def init(cls, rng: np.random.Generator, *, n_bins: int, n_mfcc: int,
             frame_len: int, d_key: int = 16, hidden: int = 32,
             d_wav: int = 32, d_attn: int = 16) -> "AttnEncoders":
        return cls(
            enc_spec=MlpBlock([n_bins, hidden, d_key], "relu", rng=rng),
            enc_mfcc=MlpBlock([n_mfcc, hidden, d_key], "relu", rng=rng),
            query=Tensor(uniform_init(rng, d_key, 1, (d_key,)),
                         requires_grad=True),
            wav_proj=Tensor(uniform_init(rng, frame_len, d_wav,
                                         (frame_len, d_wav)),
                            requires_grad=True),
            out_proj=Tensor(uniform_init(rng, d_wav, d_attn, (d_wav, d_attn)),
                            requires_grad=True),
        )

    @property
    def params(self):
        return (self.enc_spec.params + self.enc_mfcc.params
                + [self.query, self.wav_proj, self.out_proj])


def attn_reweight(frames: FrameFeatures, enc: AttnEncoders) -> Tensor:
    """Clip-level emotion feature from per-frame streams, (d_attn,)."""
    d_key = enc.query.shape[0]
    if enc.enc_spec.widths[-1] != d_key or enc.enc_mfcc.widths[-1] != d_key:
        raise ValueError("encoder output dims must match the query dim")
    if enc.enc_spec.widths[0] != frames.spec.shape[1] \
            or enc.enc_mfcc.widths[0] != frames.mfcc.shape[1]:
        raise ValueError("encoder input dims must match the frame streams")

    keys = add(enc.enc_spec(Tensor(frames.spec)),
               enc.enc_mfcc(Tensor(frames.mfcc)))          # (F, d_key)
    logits = mul(matmul(keys, enc.query), 1.0 / np.sqrt(d_key))
    weights = softmax(logits)                               # (F,)
    wav_embed = matmul(Tensor(frames.frames), enc.wav_proj)  # (F, d_wav)
    pooled = matmul(weights, wav_embed)                      # (d_wav,)
    return matmul(pooled, enc.out_proj)


def attention_weights(frames: FrameFeatures, enc: AttnEncoders) -> np.ndarray:
    """Forward-only view of the per-frame softmax weights (diagnostics)."""
    keys = add(enc.enc_spec(Tensor(frames.spec)),
               enc.enc_mfcc(Tensor(frames.mfcc)))
    logits = mul(matmul(keys, enc.query), 1.0 / np.sqrt(enc.query.shape[0]))
    return softmax(logits).data

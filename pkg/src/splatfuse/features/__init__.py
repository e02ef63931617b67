from .attention import AttnEncoders, attn_reweight
from .audio import AudioClip, load_wav, tone_clip
from .dsp import AudioConfig, FrameFeatures, extract_frames, frame_count
from .planes import FeaturePlanes, encode_emotion, plane_gather
from .synth import synth_features

__all__ = [
    "AttnEncoders", "attn_reweight",
    "AudioClip", "load_wav", "tone_clip",
    "AudioConfig", "FrameFeatures", "extract_frames", "frame_count",
    "FeaturePlanes", "encode_emotion", "plane_gather",
    "synth_features",
]

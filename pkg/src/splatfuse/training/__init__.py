from .losses import (
    SSIM_C1,
    SSIM_C2,
    WINDOW_SIGMA,
    WINDOW_SIZE,
    emotion_stage2_loss,
    l1_loss,
    loss_branch,
    loss_fuse,
    recon_loss,
    ssim,
    zero_perceptual,
)
from .metrics import EvalReport, FrameMetrics, evaluate, psnr, ssim_value, write_metrics_csv
from .trainer import (
    DivergenceError,
    TraceRow,
    TrainResult,
    load_checkpoint,
    render_heldout,
    save_checkpoint,
    train,
    write_trace,
)

__all__ = [
    "SSIM_C1",
    "SSIM_C2",
    "WINDOW_SIGMA",
    "WINDOW_SIZE",
    "DivergenceError",
    "EvalReport",
    "FrameMetrics",
    "TraceRow",
    "TrainResult",
    "emotion_stage2_loss",
    "evaluate",
    "l1_loss",
    "load_checkpoint",
    "loss_branch",
    "loss_fuse",
    "psnr",
    "recon_loss",
    "render_heldout",
    "save_checkpoint",
    "ssim",
    "ssim_value",
    "train",
    "write_metrics_csv",
    "write_trace",
    "zero_perceptual",
]

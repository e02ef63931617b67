"""Forward-only image quality metrics and the held-out evaluation report."""

import math
from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from .losses import ssim

PSNR_CAP = 99.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images, capped at 99."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def ssim_value(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity as a plain float (no graph)."""
    return float(ssim(Tensor(a), Tensor(b)).data)


@dataclass
class FrameMetrics:
    frame: int
    psnr: float
    ssim: float
    l1: float


@dataclass
class EvalReport:
    frames: list
    mean_psnr: float
    mean_ssim: float
    mean_l1: float

    def lines(self):
        out = ["frame,psnr,ssim,l1"]
        for row in self.frames:
            out.append(
                "%d,%.17g,%.17g,%.17g" % (row.frame, row.psnr, row.ssim, row.l1)
            )
        out.append(
            "mean,%.17g,%.17g,%.17g" % (self.mean_psnr, self.mean_ssim, self.mean_l1)
        )
        return out


def evaluate(items) -> EvalReport:
    """Score (frame_index, rendered, target) triples.

    Pure: consumes already-rendered images, touches no RNG and no model
    state, so identical inputs always yield an identical report.
    """
    rows = []
    for frame, render, target in items:
        render = np.asarray(render, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        rows.append(
            FrameMetrics(
                frame=int(frame),
                psnr=psnr(render, target),
                ssim=ssim_value(render, target),
                l1=float(np.mean(np.abs(render - target))),
            )
        )
    if not rows:
        raise ValueError("no frames to evaluate")
    return EvalReport(
        frames=rows,
        mean_psnr=float(np.mean([r.psnr for r in rows])),
        mean_ssim=float(np.mean([r.ssim for r in rows])),
        mean_l1=float(np.mean([r.l1 for r in rows])),
    )


def write_metrics_csv(path, report: EvalReport):
    with open(path, "w") as fh:
        fh.write("\n".join(report.lines()) + "\n")

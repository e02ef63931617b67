"""Fusion-mode ablation: precision-weighted vs uniform averaging.

Trains matched model pairs (same seed, same data, same corruption
stream) that differ only in how per-view state estimates are combined,
then scores both on the held-out frames. Run across a few seeds with a
corrupted conditioning view, the comparison shows whether variance
estimates actually help the fusion ignore a broken input.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .model import SplatFuseModel
from .training.metrics import evaluate
from .training.trainer import render_heldout, train

MODES = ("uncertainty", "uniform")


@dataclass
class AblationRow:
    seed: int
    mode: str
    corrupted: bool
    psnr: float
    ssim: float


@dataclass
class AblationReport:
    rows: list
    corrupt_margin: float  # mean uncertainty PSNR - mean uniform PSNR
    clean_margin: float

    def lines(self):
        out = ["seed,mode,corrupted,psnr,ssim"]
        for r in self.rows:
            out.append("%d,%s,%d,%.17g,%.17g"
                       % (r.seed, r.mode, int(r.corrupted), r.psnr, r.ssim))
        out.append("margin,corrupted,,%.17g," % self.corrupt_margin)
        out.append("margin,clean,,%.17g," % self.clean_margin)
        return out


def _run_one(dataset, cfg, seed: int, mode: str, corrupted: bool,
             progress=None) -> AblationRow:
    run_cfg = dataclasses.replace(
        cfg,
        seed=seed,
        fusion_mode=mode,
        corrupt_view=cfg.corrupt_view if corrupted else "",
    )
    model = SplatFuseModel(dataset.scene, dataset.camera, dataset.background, run_cfg)
    train(model, dataset, run_cfg, progress=progress)
    report = evaluate(render_heldout(model, dataset, run_cfg))
    return AblationRow(seed=seed, mode=mode, corrupted=corrupted,
                       psnr=report.mean_psnr, ssim=report.mean_ssim)


def _margin(rows, corrupted: bool) -> float:
    unc = [r.psnr for r in rows if r.mode == "uncertainty" and r.corrupted == corrupted]
    uni = [r.psnr for r in rows if r.mode == "uniform" and r.corrupted == corrupted]
    return float(np.mean(unc) - np.mean(uni))


def ablate_fusion(dataset, cfg, progress=None) -> AblationReport:
    """Both fusion modes, corrupted and clean, across cfg.seeds."""
    if not cfg.corrupt_view:
        cfg = dataclasses.replace(cfg, corrupt_view="f_tone")
    rows = []
    for corrupted in (True, False):
        for seed in cfg.seed_list():
            for mode in MODES:
                if progress:
                    progress(f"seed={seed} mode={mode} corrupted={int(corrupted)}")
                rows.append(_run_one(dataset, cfg, seed, mode, corrupted))
    return AblationReport(
        rows=rows,
        corrupt_margin=_margin(rows, True),
        clean_margin=_margin(rows, False),
    )


def write_ablation_csv(path, report: AblationReport):
    with open(path, "w") as fh:
        fh.write("\n".join(report.lines()) + "\n")

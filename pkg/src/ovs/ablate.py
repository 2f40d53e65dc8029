"""Mode comparison and iteration sweep on one sequence."""

from __future__ import annotations

import csv
import logging
import time
from pathlib import Path

import numpy as np

from .config import Config
from .errors import EmptyRegion
from .expand import expand_sequence
from .io import write_json, write_sequence
from .metrics import cropping_ratio, distortion, psnr, ssim
from .plotting import line_plot
from .stabilizer import estimate_trajectory, stabilize

log = logging.getLogger(__name__)

ABLATION_MODES = ("global", "coarse_only", "fine_only", "full")
MODE_LABELS = {"global": "baseline", "coarse_only": "coarse_only",
               "fine_only": "fine_only", "full": "full"}
SWEEP = (0, 5, 10, 15)


def band_mask(canvas):
    """Valid pixels outside the original frame rectangle."""
    band = canvas.mask.copy()
    band[canvas.inner.slices] = False
    return band


def expansion_quality(canvases, gt):
    """Mean out-of-boundary PSNR and SSIM against ground-truth canvases.

    Each frame is scored on its own valid band; frames with an empty band
    (or no SSIM window inside it) are left out of that average.
    """
    ps, ss, filled = [], [], []
    for c, g in zip(canvases, gt):
        band = band_mask(c)
        outside = band.size - c.inner.width * c.inner.height
        filled.append(band.sum() / outside if outside else 1.0)
        if not band.any():
            continue
        ps.append(psnr(c.image, g.image, band))
        try:
            ss.append(ssim(c.image, g.image, band))
        except EmptyRegion:
            pass
    return {
        "psnr": float(np.mean(ps)) if ps else None,
        "ssim": float(np.mean(ss)) if ss else None,
        "band_filled": float(np.mean(filled)),
        "frames_scored": len(ps),
    }


def stabilization_row(frames, sources, config: Config, trajectory, fill=None):
    fill = config.stabilizer.fill if fill is None else fill
    res = stabilize(frames, sources, window=config.stabilizer.window, fill=fill,
                    trajectory=trajectory)
    seed = config.run.seed
    return res, {
        "cropping": cropping_ratio(frames, res.frames, seed).value,
        "distortion": distortion(frames, res.frames, seed).value,
        "crop_scale": res.scale,
        "hole_pixels": res.rendered.hole_area(),
    }


def run_ablation(frames, config: Config | None = None, gt=None, sweep=SWEEP,
                 modes=ABLATION_MODES, mode_iterations=1, estimator=None):
    """Compare alignment modes and sweep the iteration count.

    Mode rows expand with ``mode_iterations`` and are scored against ``gt``
    canvases when given. Iteration rows come from one full-mode expansion,
    snapshotted at each count in ``sweep`` and stabilized without fill.
    Returns ``(report, stabilized_frames_of_last_sweep_entry)``.
    """
    config = config or Config()
    report = {"config": config.as_dict(), "frames": len(frames),
              "mode_iterations": mode_iterations, "modes": [], "iterations": []}
    for mode in modes:
        t0 = time.perf_counter()
        res = expand_sequence(frames, mode_iterations, mode, config, estimator)
        row = {"mode": MODE_LABELS[mode], "valid_fraction":
               float(np.mean([c.mask.mean() for c in res.canvases]))}
        if gt is not None:
            row.update(expansion_quality(res.canvases, gt))
        log.info("mode %s done in %.1fs", mode, time.perf_counter() - t0)
        report["modes"].append(row)

    sweep = sorted(set(int(k) for k in sweep))
    res = expand_sequence(frames, max(sweep), "full", config, estimator, snapshots=sweep)
    traj = estimate_trajectory(frames, config.coarse.grid_rows, config.coarse.grid_cols,
                               config.coarse.max_points, config.run.seed)
    last = None
    for k in sweep:
        stab, row = stabilization_row(frames, res.snapshots[k], config, traj, fill="none")
        row = {"iterations": k, **row}
        if gt is not None:
            row.update({f"band_{key}": v
                        for key, v in expansion_quality(res.snapshots[k], gt).items()})
        report["iterations"].append(row)
        last = stab.frames
    return report, last


def write_ablation(out_dir, report, frames=None):
    """report.json, modes.csv, iterations.csv and crop_vs_iterations.svg."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "report.json", report)
    for name in ("modes", "iterations"):
        rows = report[name]
        keys = list(rows[0].keys()) if rows else []
        with open(out / f"{name}.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    its = report["iterations"]
    if its:
        line_plot(out / "crop_vs_iterations.svg", [r["iterations"] for r in its],
                  {"cropping ratio": [r["cropping"] for r in its]},
                  "iterations", "cropping ratio")
    if frames is not None:
        write_sequence(out / "frames", frames)
    return out

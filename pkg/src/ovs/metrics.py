"""Stabilization metrics, alignment quality and extrapolation losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .coarse import detect_and_track, ransac_homography
from .core import luma
from .errors import DegenerateFit, DimensionMismatch, EmptyRegion, FitFailure, TooFewKeypoints, TooShort

PSNR_CAP = 99.0
LOSS_EPS = 1e-12
MIN_STABILITY_FRAMES = 32


@dataclass
class SequenceMetric:
    value: float
    per_frame: list  # None for skipped frames
    skipped: int = 0


def fit_frame_homography(src, dst, seed=0):
    """Homography taking ``src`` pixel coordinates to ``dst`` (tracked corners + RANSAC)."""
    try:
        kps = detect_and_track(dst, src)
        H, inliers = ransac_homography(kps.positions, kps.targets, seed=seed)
    except (TooFewKeypoints, DegenerateFit) as exc:
        raise FitFailure(str(exc)) from None
    if inliers.sum() < 8:
        raise FitFailure("too few inliers")
    return H / H[2, 2]


def _per_frame(inputs, outputs, fn, seed):
    if len(inputs) != len(outputs):
        raise DimensionMismatch("input and output differ in frame count")
    if not inputs:
        raise ValueError("empty video")
    values = []
    for a, b in zip(inputs, outputs):
        try:
            values.append(fn(fit_frame_homography(a, b, seed)))
        except FitFailure:
            values.append(None)
    skipped = sum(v is None for v in values)
    if skipped * 2 > len(values):
        raise FitFailure(f"{skipped} of {len(values)} frames could not be fitted")
    return values, skipped


def _scale(H):
    A = H[:2, :2]
    return float(np.sqrt(abs(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])))


def cropping_ratio(inputs, outputs, seed=0) -> SequenceMetric:
    """Mean over frames of 1/s, s being the area scale of the input-to-output map."""
    def ratio(H):
        s = _scale(H)
        return float(min(1.0 / s, 2.0)) if s > 0 else 2.0

    values, skipped = _per_frame(inputs, outputs, ratio, seed)
    kept = [v for v in values if v is not None]
    return SequenceMetric(float(np.mean(kept)), values, skipped)


def distortion(inputs, outputs, seed=0) -> SequenceMetric:
    """Worst per-frame ratio of the affine part's singular values."""
    def aniso(H):
        sv = np.linalg.svd(H[:2, :2], compute_uv=False)
        return float(sv[1] / sv[0]) if sv[0] > 0 else 0.0

    values, skipped = _per_frame(inputs, outputs, aniso, seed)
    kept = [v for v in values if v is not None]
    return SequenceMetric(float(np.min(kept)), values, skipped)


def interframe_similarity(frames, seed=0) -> np.ndarray:
    """(tx, ty, degrees) of the homography between each pair of consecutive frames.

    Pairs that cannot be fitted count as no motion.
    """
    out = []
    for a, b in zip(frames[:-1], frames[1:]):
        try:
            H = fit_frame_homography(a, b, seed)
            out.append([H[0, 2], H[1, 2], np.degrees(np.arctan2(H[1, 0], H[0, 0]))])
        except FitFailure:
            out.append([0.0, 0.0, 0.0])
    return np.array(out)


def low_frequency_share(signal, low=(1, 5), floor=1e-12) -> float:
    """Energy in frequencies ``low`` (inclusive, DC = 0) over frequencies 1..N/2-1.

    A component whose total energy is at most ``floor`` per sample counts as 1.0.
    """
    x = np.asarray(signal, dtype=np.float64)
    n = len(x)
    energy = np.abs(np.fft.fft(x)) ** 2
    top = n // 2 - 1
    total = energy[1:top + 1].sum()
    if total <= floor * n * n:
        return 1.0
    return float(energy[low[0]:min(low[1], top) + 1].sum() / total)


def stability_from_signals(signals) -> float:
    signals = np.asarray(signals, dtype=np.float64)
    return float(np.mean([low_frequency_share(signals[:, k]) for k in range(signals.shape[1])]))


def stability(outputs, seed=0) -> float:
    """Mean low-frequency share of the inter-frame tx, ty and rotation sequences."""
    if len(outputs) < MIN_STABILITY_FRAMES:
        raise TooShort(f"{len(outputs)} frames; need {MIN_STABILITY_FRAMES}")
    return stability_from_signals(interframe_similarity(outputs, seed))


def _region(a, b, region):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    region = np.ones(a.shape[:2], dtype=bool) if region is None else np.asarray(region, bool)
    if region.shape != a.shape[:2]:
        raise DimensionMismatch("region does not match the frames")
    if not region.any():
        raise EmptyRegion("region has no pixels")
    return a, b, region


def psnr(a, b, region=None) -> float:
    a, b, region = _region(a, b, region)
    mse = float(np.mean((a[region] - b[region]) ** 2))
    if mse == 0:
        return PSNR_CAP
    return float(min(10 * np.log10(1.0 / mse), PSNR_CAP))


def ssim(a, b, region=None) -> float:
    """Gaussian-window SSIM on luminance, averaged over windows inside ``region``."""
    a, b, region = _region(a, b, region)
    x = luma(a) if a.ndim == 3 else a
    y = luma(b) if b.ndim == 3 else b
    inside = ndimage.binary_erosion(region, structure=np.ones((11, 11), bool), border_value=0)
    if not inside.any():
        raise EmptyRegion("no 11x11 window fits inside the region")

    def blur(img):
        return ndimage.gaussian_filter(img, 1.5, truncate=5 / 1.5, mode="nearest")

    mx, my = blur(x), blur(y)
    vx = blur(x * x) - mx * mx
    vy = blur(y * y) - my * my
    cxy = blur(x * y) - mx * my
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    smap = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return float(smap[inside].mean())


@dataclass
class Losses:
    L_I: float
    L_G: float
    L_M: float

    @property
    def total(self):
        return self.L_I + 2 * self.L_G + 2 * self.L_M

    def as_dict(self):
        return {"L_I": self.L_I, "L_G": self.L_G, "L_M": self.L_M, "L": self.total}


def eval_losses(extrap_frame, extrap_edges, extrap_mask, gt_frame, gt_edges, pre_mask) -> Losses:
    """Masked robust L1 on colour and edges, plus the mask-shrinkage penalty."""
    f = np.asarray(extrap_frame, dtype=np.float64)
    g = np.asarray(gt_frame, dtype=np.float64)
    e = np.asarray(extrap_edges, dtype=np.float64)
    ge = np.asarray(gt_edges, dtype=np.float64)
    m = np.asarray(extrap_mask, dtype=np.float64)
    pm = np.asarray(pre_mask, dtype=np.float64)
    if f.shape != g.shape or e.shape != ge.shape or m.shape != pm.shape \
            or m.shape != f.shape[:2] or e.shape != m.shape:
        raise DimensionMismatch("loss inputs differ in size")
    mf = m[..., None] if f.ndim == 3 else m
    l_i = float(np.mean(np.abs(f - g + LOSS_EPS) * mf))
    l_g = float(np.mean(np.abs(e - ge + LOSS_EPS) * m))
    l_m = float(np.mean((pm * m - pm) ** 2))
    return Losses(l_i, l_g, l_m)

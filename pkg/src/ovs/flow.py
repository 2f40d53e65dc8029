"""Dense flow estimation behind a pluggable estimator interface."""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

import cv2
import numpy as np
from scipy import ndimage

from .core import Canvas, FlowField, luma, pixel_grid, sample_bilinear
from .errors import DimensionMismatch
from .io import flow_filename, read_flo


class FlowEstimator(Protocol):
    name: str

    def estimate(self, ref: np.ndarray, tgt: np.ndarray, pair=None) -> FlowField:
        """Flow from ``ref`` to ``tgt``: ref pixel p matches tgt at p + flow(p)."""


def _box(img, size):
    return cv2.boxFilter(img, -1, (size, size), borderType=cv2.BORDER_REPLICATE)


def _warp_gray(img, flow):
    """Sample ``img`` at p + flow(p), clamping coordinates to the raster."""
    h, w = img.shape
    X, Y = pixel_grid((h, w))
    mx = np.clip(X + flow[..., 0], 0, w - 1)
    my = np.clip(Y + flow[..., 1], 0, h - 1)
    out, _ = sample_bilinear(img, mx, my)
    return out


class BaselineFlow:
    """Coarse-to-fine block matching with one least-squares gradient step per level.

    4-level pyramid (factor 0.5); at each level a 16x16 window is matched over
    +-8 px around the upsampled estimate, the integer field is 5x5 median
    filtered, refined by a single Lucas-Kanade update, and median filtered
    again before moving to the next finer level.

    Optional validity masks weight the block costs and gradient sums so that
    pixels without content on either side take no part in matching.
    """

    name = "baseline"
    accepts_masks = True

    def __init__(self, levels=4, block=16, search=8, median=5, min_eig=1e-7, min_gain=1e-5,
                 min_support=0.25):
        self.levels = levels
        self.block = block
        self.search = search
        self.median = median
        self.min_eig = min_eig
        self.min_gain = min_gain
        self.min_support = min_support

    def estimate(self, ref, tgt, pair=None, ref_mask=None, tgt_mask=None) -> FlowField:
        if np.shape(ref)[:2] != np.shape(tgt)[:2]:
            raise DimensionMismatch("ref and tgt differ in size")
        a = luma(ref).astype(np.float32)
        b = luma(tgt).astype(np.float32)
        ones = np.ones(a.shape, dtype=np.float32)
        ma = ones if ref_mask is None else np.asarray(ref_mask, dtype=np.float32)
        mb = ones if tgt_mask is None else np.asarray(tgt_mask, dtype=np.float32)
        pyr = [(a, b, ma, mb)]
        for _ in range(self.levels - 1):
            if min(pyr[-1][0].shape) < 2 * self.block:
                break
            pyr.append(tuple(cv2.pyrDown(x) for x in pyr[-1]))

        flow = np.zeros(pyr[-1][0].shape + (2,), dtype=np.float64)
        for level in range(len(pyr) - 1, -1, -1):
            la, lb, lma, lmb = pyr[level]
            if flow.shape[:2] != la.shape:
                flow = 2.0 * cv2.resize(flow, (la.shape[1], la.shape[0]),
                                        interpolation=cv2.INTER_LINEAR)
            # integer matches are median filtered so the gradient step sees a smooth warp
            flow = self._median_filter(self._match(la, lb, lma, lmb, flow))
            flow = self._lk_step(la, lb, lma, lmb, flow)
            if level > 0:
                flow = self._median_filter(flow)
        h, w = a.shape
        return FlowField(flow, np.ones((h, w), dtype=bool))

    def _median_filter(self, flow):
        return np.stack([cv2.medianBlur(flow[..., k].astype(np.float32), self.median)
                         for k in range(2)], axis=-1).astype(np.float64)

    def _match(self, a, b, ma, mb, flow):
        s = self.search
        warped = _warp_gray(b, flow).astype(np.float32)
        wmask = _warp_gray(mb, flow).astype(np.float32)
        padded = cv2.copyMakeBorder(warped, s, s, s, s, cv2.BORDER_REPLICATE)
        mpadded = cv2.copyMakeBorder(wmask, s, s, s, s, cv2.BORDER_CONSTANT, value=0.0)
        h, w = a.shape

        def cost(shifted, mshift):
            wgt = ma * mshift
            den = _box(wgt, self.block)
            num = _box(wgt * (a - shifted) ** 2, self.block)
            ok = den >= self.min_support
            return np.where(ok, num / np.maximum(den, 1e-6), np.inf)

        best = cost(warped, wmask)
        best_dx = np.zeros((h, w), dtype=np.float64)
        best_dy = np.zeros((h, w), dtype=np.float64)
        for dy in range(-s, s + 1):
            for dx in range(-s, s + 1):
                if dx == 0 and dy == 0:
                    continue
                c = cost(padded[s + dy:s + dy + h, s + dx:s + dx + w],
                         mpadded[s + dy:s + dy + h, s + dx:s + dx + w])
                # flat blocks keep the current estimate instead of chasing noise
                better = c < best * (1.0 - 1e-4) - self.min_gain
                best = np.where(better, c, best)
                best_dx[better] = dx
                best_dy[better] = dy
        return flow + np.stack([best_dx, best_dy], axis=-1)

    def _lk_step(self, a, b, ma, mb, flow):
        warped = _warp_gray(b, flow).astype(np.float32)
        wgt = ma * _warp_gray(mb, flow).astype(np.float32)
        gx = cv2.Sobel(warped, cv2.CV_32F, 1, 0, ksize=3, borderType=cv2.BORDER_REPLICATE) / 8
        gy = cv2.Sobel(warped, cv2.CV_32F, 0, 1, ksize=3, borderType=cv2.BORDER_REPLICATE) / 8
        gt = warped - a
        sxx = _box(wgt * gx * gx, self.block).astype(np.float64)
        syy = _box(wgt * gy * gy, self.block).astype(np.float64)
        sxy = _box(wgt * gx * gy, self.block).astype(np.float64)
        sxt = _box(wgt * gx * gt, self.block).astype(np.float64)
        syt = _box(wgt * gy * gt, self.block).astype(np.float64)
        det = sxx * syy - sxy * sxy
        tr = sxx + syy
        lam_min = 0.5 * (tr - np.sqrt(np.maximum(tr * tr - 4 * det, 0.0)))
        ok = lam_min > self.min_eig
        safe = np.where(ok, det, 1.0)
        du = np.where(ok, -(syy * sxt - sxy * syt) / safe, 0.0)
        dv = np.where(ok, -(sxx * syt - sxy * sxt) / safe, 0.0)
        du = np.clip(du, -1.0, 1.0)
        dv = np.clip(dv, -1.0, 1.0)
        return flow + np.stack([du, dv], axis=-1)


class FileFlow:
    """Precomputed Middlebury flow files named ``flow_%06d_%06d.flo``.

    Files may hold a full canvas-sized field or an unpadded frame-sized one,
    which is embedded at the canvas centre.
    """

    name = "files"

    def __init__(self, directory):
        self.directory = Path(directory)

    def estimate(self, ref, tgt, pair=None) -> FlowField:
        if pair is None:
            raise ValueError("file-backed flow needs the (ref, tgt) frame indices")
        uv = read_flo(self.directory / flow_filename(*pair)).astype(np.float64)
        h, w = np.shape(ref)[:2]
        fh, fw = uv.shape[:2]
        if (fh, fw) != (h, w):
            oy, ox = (h - fh) // 2, (w - fw) // 2
            if oy < 0 or ox < 0:
                raise DimensionMismatch(f"flow file {fw}x{fh} larger than canvas {w}x{h}")
            full = np.zeros((h, w, 2))
            full[oy:oy + fh, ox:ox + fw] = uv
            uv = full
        uv = np.where(np.isfinite(uv), uv, 0.0)
        return FlowField(uv, np.ones((h, w), dtype=bool))


def make_estimator(spec: str):
    """Parse ``baseline`` or ``files:<dir>``."""
    if spec == "baseline":
        return BaselineFlow()
    if spec.startswith("files:"):
        return FileFlow(spec[len("files:"):])
    raise ValueError(f"unknown flow estimator {spec!r}")


def fill_invalid(canvas: Canvas) -> np.ndarray:
    """Canvas image with invalid pixels replaced by the nearest valid colour.

    Keeps zero-filled bands from acting as strong false edges for matching.
    """
    if canvas.mask.all() or not canvas.mask.any():
        return canvas.image
    _, (iy, ix) = ndimage.distance_transform_edt(~canvas.mask, return_indices=True)
    return canvas.image[iy, ix]


def estimate_masked_flow(estimator, ref: Canvas, aligned: Canvas, pair=None) -> FlowField:
    """Reference-to-aligned flow, zeroed and invalid outside the reference mask."""
    if ref.shape != aligned.shape:
        raise DimensionMismatch(f"canvases {ref.shape} and {aligned.shape} differ")
    if getattr(estimator, "accepts_masks", False):
        flow = estimator.estimate(fill_invalid(ref), fill_invalid(aligned), pair=pair,
                                  ref_mask=ref.mask, tgt_mask=aligned.mask)
    else:
        flow = estimator.estimate(fill_invalid(ref), fill_invalid(aligned), pair=pair)
    if flow.shape != ref.shape:
        raise DimensionMismatch(f"estimator returned {flow.shape}, expected {ref.shape}")
    uv = np.where(np.isfinite(flow.uv), flow.uv, 0.0)
    return FlowField(uv, np.ones(ref.shape, dtype=bool)).masked(ref.mask)

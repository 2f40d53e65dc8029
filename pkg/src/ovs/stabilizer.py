"""Minimal mesh-trajectory stabilizer that renders from padded or expanded canvases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .coarse import estimate_grid, grid_from_motion, identity_grid, warp_canvas
from .core import Canvas, Rect, pad_frame, pixel_grid, sample_bilinear
from .errors import DegenerateCrop


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Cumulative per-vertex motion: ``offsets[i]`` is frame i's displacement from the rest pose."""

    offsets: np.ndarray  # (n, rows+1, cols+1, 2)
    width: int
    height: int

    @property
    def n_frames(self):
        return len(self.offsets)

    def rest_vertices(self):
        return identity_grid(self.width, self.height, self.offsets.shape[1] - 1,
                             self.offsets.shape[2] - 1).vertices()

    def positions(self):
        return self.rest_vertices()[None] + self.offsets

    def similarity(self):
        """Per-frame least-squares similarity (tx, ty, scale, degrees) rest -> frame."""
        rest = self.rest_vertices().reshape(-1, 2)
        out = []
        for pos in self.positions():
            out.append(fit_similarity(rest, pos.reshape(-1, 2)))
        return np.array(out)


def fit_similarity(src, dst):
    """Closed-form least-squares similarity; returns (tx, ty, scale, degrees)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    ms, md = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - ms, dst - md
    denom = (a ** 2).sum()
    if denom == 0:
        return np.array([*(md - ms), 1.0, 0.0])
    c = (a * b).sum() / denom
    s = (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]).sum() / denom
    scale = np.hypot(c, s)
    R = np.array([[c, -s], [s, c]])
    t = md - R @ ms
    return np.array([t[0], t[1], scale, np.degrees(np.arctan2(s, c))])


def estimate_trajectory(frames, rows=16, cols=16, max_points=1000, seed=0) -> Trajectory:
    """Accumulate grid motions between consecutive frames; failed pairs count as static."""
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    h, w = np.shape(frames[0])[:2]
    offsets = np.zeros((len(frames), rows + 1, cols + 1, 2))
    for i in range(1, len(frames)):
        grid, ok = estimate_grid(frames[i], frames[i - 1], rows, cols, max_points, seed)
        step = grid.vertex_motion if ok else 0.0
        offsets[i] = offsets[i - 1] + step
    return Trajectory(offsets, w, h)


def gaussian_weights(window, sigma=None):
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and at least 3")
    sigma = window / 6.0 if sigma is None else sigma
    half = window // 2
    t = np.arange(-half, half + 1)
    return np.exp(-0.5 * (t / sigma) ** 2)


def smooth_trajectory(traj: Trajectory, window=31, sigma=None) -> Trajectory:
    """Gaussian temporal average per vertex; the window is clipped and renormalised at the ends."""
    wts = gaussian_weights(window, sigma)
    half = window // 2
    n = traj.n_frames
    out = np.empty_like(traj.offsets)
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        w = wts[lo - i + half:hi - i + half]
        out[i] = np.tensordot(w / w.sum(), traj.offsets[lo:hi], axes=(0, 0))
    return Trajectory(out, traj.width, traj.height)


def fill_nearest(image, valid):
    """Replace invalid pixels by their nearest valid pixel (Euclidean)."""
    if valid.all() or not valid.any():
        return image.copy()
    _, (iy, ix) = ndimage.distance_transform_edt(~valid, return_indices=True)
    return image[iy, ix]


@dataclass
class Rendered:
    frames: list  # rendered frames, holes black (or filled)
    masks: list  # per-frame validity before any fill

    def hole_area(self) -> int:
        return int(sum((~m).sum() for m in self.masks))


def render_stabilized(sources, traj: Trajectory, smoothed: Trajectory, fill="none") -> Rendered:
    """Warp each source so its vertices move by (smoothed - original).

    ``sources`` are frames or Canvas objects (padded frames or expanded
    canvases); output frames have the original frame size.
    """
    if fill not in ("none", "nearest"):
        raise ValueError("fill must be none or nearest")
    if len(sources) != traj.n_frames or smoothed.n_frames != traj.n_frames:
        raise ValueError("trajectories must cover every frame")
    w, h = traj.width, traj.height
    frames, masks = [], []
    for i, src in enumerate(sources):
        canvas = src if isinstance(src, Canvas) else pad_frame(src, 0)
        delta = smoothed.offsets[i] - traj.offsets[i]
        grid = grid_from_motion(delta, w, h)
        out = warp_canvas(canvas, grid, 0, out_shape=(h, w))
        image = fill_nearest(out.image, out.mask) if fill == "nearest" else out.image
        frames.append(image)
        masks.append(out.mask)
    return Rendered(frames, masks)


def crop_scale(masks) -> float:
    """Largest centred, aspect-preserving scale whose rectangle avoids every hole."""
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if not masks:
        raise ValueError("need at least one mask")
    common = np.logical_and.reduce(masks)
    h, w = common.shape
    if common.all():
        return 1.0
    X, Y = pixel_grid((h, w))
    reach = np.maximum(2 * np.abs(X - (w - 1) / 2) / w, 2 * np.abs(Y - (h - 1) / 2) / h)
    return float(min(reach[~common].min(), 1.0))


def crop_rectangle(masks) -> Rect:
    """Centred rectangle with the frame's aspect ratio inside every mask.

    It contains exactly the pixels whose normalised distance from the centre is
    below the crop scale.
    """
    s = crop_scale(masks)
    h, w = np.shape(masks[0])
    X, Y = pixel_grid((h, w))
    reach = np.maximum(2 * np.abs(X - (w - 1) / 2) / w, 2 * np.abs(Y - (h - 1) / 2) / h)
    inside = reach < s if s < 1.0 else np.ones((h, w), dtype=bool)
    if not inside.any():
        raise DegenerateCrop("no hole-free rectangle around the frame centre")
    ys, xs = np.nonzero(inside)
    return Rect(int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1),
                int(ys.max() - ys.min() + 1))


def zoom_center(frame, scale, mask=None):
    """Magnify the central ``scale`` portion of ``frame`` back to full size."""
    h, w = np.shape(frame)[:2]
    X, Y = pixel_grid((h, w))
    cx, cy = (w - 1) / 2, (h - 1) / 2
    out, valid = sample_bilinear(frame, cx + (X - cx) * scale, cy + (Y - cy) * scale, mask=mask)
    return out, valid


@dataclass
class StabilizeResult:
    frames: list  # presented output, original frame size
    rendered: Rendered
    trajectory: Trajectory
    smoothed: Trajectory
    scale: float  # 1.0 when filled
    rect: Rect
    valid: list  # per-frame validity of the presented output


def stabilize(frames, sources=None, window=31, fill="none", rows=16, cols=16, seed=0,
              trajectory: Trajectory | None = None) -> StabilizeResult:
    """Estimate, smooth and render; without fill the result is cropped and zoomed."""
    traj = trajectory or estimate_trajectory(frames, rows, cols, seed=seed)
    smoothed = smooth_trajectory(traj, window)
    sources = frames if sources is None else sources
    rendered = render_stabilized(sources, traj, smoothed, fill)
    h, w = np.shape(frames[0])[:2]
    if fill == "nearest":
        if not all(m.any() for m in rendered.masks):
            raise DegenerateCrop("a rendered frame has no valid pixel")
        full = [np.ones((h, w), dtype=bool) for _ in rendered.frames]
        return StabilizeResult(rendered.frames, rendered, traj, smoothed, 1.0,
                               Rect(0, 0, w, h), full)
    rect = crop_rectangle(rendered.masks)
    scale = crop_scale(rendered.masks)
    if scale >= 1.0:
        out = [f.copy() for f in rendered.frames]
        valid = [m.copy() for m in rendered.masks]
    else:
        zoomed = [zoom_center(f, scale, m) for f, m in zip(rendered.frames, rendered.masks)]
        out = [z[0] for z in zoomed]
        valid = [z[1] for z in zoomed]
    return StabilizeResult(out, rendered, traj, smoothed, scale, rect, valid)

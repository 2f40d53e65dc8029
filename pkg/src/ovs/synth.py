"""Synthetic jittery sequences with known out-of-boundary ground truth."""

from __future__ import annotations

from dataclasses import dataclass, replace

import cv2
import numpy as np
from scipy import ndimage

from .core import Canvas, default_pad, sample_bilinear
from .errors import PanoramaTooSmall, SourceTooSmall


@dataclass(frozen=True)
class JitterSpec:
    n_frames: int = 30
    smooth_amplitude: float = 60.0
    smooth_period: float = 30.0
    jitter_sigma: float = 8.0
    rotation_sigma: float = 0.5
    seed: int = 7

    def __post_init__(self):
        if self.n_frames < 2:
            raise ValueError("n_frames must be at least 2")
        for name in ("smooth_amplitude", "jitter_sigma", "rotation_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.smooth_period <= 0:
            raise ValueError("smooth_period must be positive")

    def scaled(self, factor: float) -> "JitterSpec":
        """Same motion at a different resolution (pixel quantities scale)."""
        return replace(self, smooth_amplitude=self.smooth_amplitude * factor,
                       jitter_sigma=self.jitter_sigma * factor)


@dataclass(frozen=True, eq=False)
class SynthVideo:
    frames: list
    gt: list  # full windows, one Canvas per frame
    trajectory: np.ndarray  # (n, 3): centre x, centre y, rotation in degrees
    pad: int

    @property
    def frame_size(self):
        h, w = self.frames[0].shape[:2]
        return w, h


def make_panorama(width=1400, height=1000, seed=0, n_shapes=None) -> np.ndarray:
    """Band-limited textured image: layered noise plus coloured shapes."""
    rng = np.random.default_rng(seed)
    img = np.zeros((height, width, 3))
    for sigma, amp in ((24.0, 0.5), (8.0, 0.35), (3.0, 0.2)):
        noise = rng.standard_normal((height, width, 3))
        layer = ndimage.gaussian_filter(noise, sigma=(sigma, sigma, 0))
        img += amp * layer / (layer.std() + 1e-12)
    img = 0.5 + 0.12 * img
    canvas = np.ascontiguousarray(img, dtype=np.float32)
    if n_shapes is None:
        n_shapes = int(width * height / 2500)
    for _ in range(n_shapes):
        color = tuple(float(c) for c in rng.uniform(0.05, 0.95, 3))
        x, y = (int(v) for v in rng.integers(0, [width, height]))
        size = int(rng.integers(4, 28))
        if rng.random() < 0.5:
            w2, h2 = (int(v) for v in rng.integers(3, size + 4, 2))
            cv2.rectangle(canvas, (x, y), (x + w2, y + h2), color, -1)
        else:
            cv2.circle(canvas, (x, y), size // 2 + 2, color, -1)
    smooth = ndimage.gaussian_filter(canvas.astype(np.float64), sigma=(1.5, 1.5, 0))
    return np.clip(smooth, 0.0, 1.0)


def crop_protocol(source, seed, gt_size=(800, 640), input_size=(640, 480)):
    """Random ground-truth crop and its centred input crop.

    Returns ``(gt, inp, origin)``; ``origin`` is the (x, y) of the ground-truth
    crop inside ``source``. The input always sits at offset
    ``((gt_w - in_w) // 2, (gt_h - in_h) // 2)`` inside the ground truth.
    """
    source = np.asarray(source, dtype=np.float64)
    sh, sw = source.shape[:2]
    gw, gh = gt_size
    iw, ih = input_size
    if sw < gw or sh < gh:
        raise SourceTooSmall(f"source {sw}x{sh} smaller than {gw}x{gh}")
    rng = np.random.default_rng(seed)
    x0 = int(rng.integers(0, sw - gw + 1))
    y0 = int(rng.integers(0, sh - gh + 1))
    gt = source[y0:y0 + gh, x0:x0 + gw].copy()
    ox, oy = (gw - iw) // 2, (gh - ih) // 2
    inp = gt[oy:oy + ih, ox:ox + iw].copy()
    return gt, inp, (x0, y0)


def sample_trajectory(spec: JitterSpec, centre) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    n = spec.n_frames
    jx = rng.normal(0.0, 1.0, n) * spec.jitter_sigma
    jy = rng.normal(0.0, 1.0, n) * spec.jitter_sigma
    rot = rng.normal(0.0, 1.0, n) * spec.rotation_sigma
    t = np.arange(n)
    cx = centre[0] + spec.smooth_amplitude * np.sin(2 * np.pi * t / spec.smooth_period) + jx
    cy = centre[1] + jy
    return np.stack([cx, cy, rot], axis=1)


def window_to_panorama(pose, window_size) -> np.ndarray:
    """3x3 map from window pixel coordinates to panorama coordinates."""
    cx, cy, deg = pose
    ww, wh = window_size
    th = np.deg2rad(deg)
    c, s = np.cos(th), np.sin(th)
    R = np.array([[c, -s], [s, c]])
    cw = np.array([(ww - 1) / 2.0, (wh - 1) / 2.0])
    M = np.eye(3)
    M[:2, :2] = R
    M[:2, 2] = np.array([cx, cy]) - R @ cw
    return M


def frame_to_panorama(pose, frame_size, pad) -> np.ndarray:
    w, h = frame_size
    shift = np.eye(3)
    shift[:2, 2] = pad
    return window_to_panorama(pose, (w + 2 * pad, h + 2 * pad)) @ shift


def relative_homography(trajectory, i, j, frame_size, pad) -> np.ndarray:
    """Map frame-i pixel coordinates to frame-j pixel coordinates."""
    Ti = frame_to_panorama(trajectory[i], frame_size, pad)
    Tj = frame_to_panorama(trajectory[j], frame_size, pad)
    return np.linalg.inv(Tj) @ Ti


def render_jitter_video(panorama, spec: JitterSpec, frame_size=(640, 480), pad=None):
    panorama = np.asarray(panorama, dtype=np.float64)
    w, h = frame_size
    pad = default_pad(w) if pad is None else pad
    ww, wh = w + 2 * pad, h + 2 * pad
    ph, pw = panorama.shape[:2]
    traj = sample_trajectory(spec, ((pw - 1) / 2.0, (ph - 1) / 2.0))

    corners = np.array([[0, 0, 1], [ww - 1, 0, 1], [0, wh - 1, 1], [ww - 1, wh - 1, 1]], float)
    for pose in traj:
        pts = corners @ window_to_panorama(pose, (ww, wh)).T
        if pts[:, 0].min() < 0 or pts[:, 1].min() < 0 or \
                pts[:, 0].max() > pw - 1 or pts[:, 1].max() > ph - 1:
            raise PanoramaTooSmall(f"window at pose {pose} leaves the {pw}x{ph} panorama")

    X, Y = np.meshgrid(np.arange(ww, dtype=np.float64), np.arange(wh, dtype=np.float64))
    frames, gts = [], []
    for pose in traj:
        M = window_to_panorama(pose, (ww, wh))
        px = M[0, 0] * X + M[0, 1] * Y + M[0, 2]
        py = M[1, 0] * X + M[1, 1] * Y + M[1, 2]
        window, _ = sample_bilinear(panorama, px, py)
        gts.append(Canvas(window, np.ones((wh, ww), dtype=bool), pad))
        frames.append(window[pad:pad + h, pad:pad + w].copy())
    return SynthVideo(frames, gts, traj, pad)


def required_panorama_size(spec: JitterSpec, frame_size, pad, margin_sigmas=4.0):
    w, h = frame_size
    ww, wh = w + 2 * pad, h + 2 * pad
    half_diag = 0.5 * np.hypot(ww, wh)
    rot = np.deg2rad(margin_sigmas * spec.rotation_sigma)
    extra_x = spec.smooth_amplitude + margin_sigmas * spec.jitter_sigma
    extra_y = margin_sigmas * spec.jitter_sigma
    grow = half_diag * np.sin(rot) + 4
    return (int(np.ceil(ww + 2 * (extra_x + grow))), int(np.ceil(wh + 2 * (extra_y + grow))))


def default_suite(scale=0.5, spec: JitterSpec | None = None, panorama_seed=0):
    """The default evaluation sequence, optionally downscaled (scale 0.5 gives 320x240)."""
    spec = (spec or JitterSpec()).scaled(scale)
    frame_size = (int(round(640 * scale)), int(round(480 * scale)))
    pad = default_pad(frame_size[0])
    pw, ph = required_panorama_size(spec, frame_size, pad)
    pano = make_panorama(pw, ph, seed=panorama_seed)
    return render_jitter_video(pano, spec, frame_size, pad)

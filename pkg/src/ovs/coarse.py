"""Coarse alignment: keypoint tracking, grid homographies, canvas warping.

Grid convention: vertices lie on a regular lattice over the *reference*
frame, spanning pixel centres [0, W-1] x [0, H-1]. ``vertex_motion[r, c]`` is
the displacement that carries the corresponding neighbour point onto the
reference vertex, so neighbour vertex = reference vertex - motion. Each cell
homography maps neighbour coordinates to reference coordinates; warping a
neighbour onto the reference canvas inverts the cell covering each pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .core import Canvas, default_pad, luma, pad_frame, sample_bilinear
from .errors import DegenerateFit, TooFewKeypoints

MIN_TRACKS = 8


@dataclass(frozen=True, eq=False)
class Keypoints:
    """Tracked corners: positions in the neighbour frame, motion toward the reference."""

    positions: np.ndarray
    motions: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.positions)

    @property
    def targets(self):
        return self.positions + self.motions


@dataclass(frozen=True, eq=False)
class HomographyGrid:
    rows: int
    cols: int
    width: int
    height: int
    vertex_motion: np.ndarray  # (rows+1, cols+1, 2)
    cells: np.ndarray  # (rows, cols, 3, 3), neighbour -> reference

    @property
    def cell_size(self):
        return (self.width - 1) / self.cols, (self.height - 1) / self.rows

    def vertices(self):
        """Reference-frame vertex coordinates, shape (rows+1, cols+1, 2)."""
        xs = np.linspace(0.0, self.width - 1, self.cols + 1)
        ys = np.linspace(0.0, self.height - 1, self.rows + 1)
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def inverse_cells(self):
        return np.linalg.inv(self.cells)


def _gray_u8(frame):
    return np.clip(np.rint(luma(frame) * 255.0), 0, 255).astype(np.uint8)


def detect_and_track(ref, neighbor, max_points=1000, min_distance=10,
                     quality=0.01, fb_threshold=1.0) -> Keypoints:
    """Shi-Tomasi corners in ``neighbor`` tracked toward ``ref`` with pyramidal LK.

    Tracks whose forward-backward round trip exceeds ``fb_threshold`` px are
    dropped. Raises TooFewKeypoints below 8 survivors.
    """
    if np.shape(ref)[:2] != np.shape(neighbor)[:2]:
        raise ValueError("frames must have identical dimensions")
    g_ref = _gray_u8(ref)
    g_nbr = _gray_u8(neighbor)
    pts = cv2.goodFeaturesToTrack(g_nbr, maxCorners=max_points, qualityLevel=quality,
                                  minDistance=min_distance, blockSize=3)
    if pts is None or len(pts) < MIN_TRACKS:
        raise TooFewKeypoints(f"{0 if pts is None else len(pts)} corners detected")
    pts = pts.astype(np.float32)
    lk = dict(winSize=(21, 21), maxLevel=2,
              criteria=(cv2.TERM_CRITERIA_COUNT | cv2.TERM_CRITERIA_EPS, 30, 0.01))
    fwd, st1, _ = cv2.calcOpticalFlowPyrLK(g_nbr, g_ref, pts, None, **lk)
    back, st2, _ = cv2.calcOpticalFlowPyrLK(g_ref, g_nbr, fwd, None, **lk)
    p0 = pts.reshape(-1, 2).astype(np.float64)
    p1 = fwd.reshape(-1, 2).astype(np.float64)
    fb = np.linalg.norm(back.reshape(-1, 2) - p0, axis=1)
    h, w = g_ref.shape
    keep = (st1.ravel() == 1) & (st2.ravel() == 1) & (fb <= fb_threshold)
    keep &= np.isfinite(p1).all(axis=1)
    if keep.sum() < MIN_TRACKS:
        raise TooFewKeypoints(f"{int(keep.sum())} tracks survived")
    p0, p1 = p0[keep], p1[keep]
    eig = cv2.cornerMinEigenVal(g_nbr, blockSize=3)
    xi = np.clip(np.rint(p0[:, 0]).astype(int), 0, w - 1)
    yi = np.clip(np.rint(p0[:, 1]).astype(int), 0, h - 1)
    return Keypoints(p0, p1 - p0, eig[yi, xi].astype(np.float64))


# -- homography fitting ----------------------------------------------------

def _normalizer(pts):
    centre = pts.mean(axis=-2, keepdims=True)
    dist = np.sqrt(((pts - centre) ** 2).sum(axis=-1)).mean(axis=-1)
    scale = np.sqrt(2.0) / np.maximum(dist, 1e-12)
    T = np.zeros(pts.shape[:-2] + (3, 3))
    T[..., 0, 0] = scale
    T[..., 1, 1] = scale
    T[..., 0, 2] = -scale * centre[..., 0, 0]
    T[..., 1, 2] = -scale * centre[..., 0, 1]
    T[..., 2, 2] = 1.0
    return T


def _apply(T, pts):
    return pts @ T[..., :2, :2].swapaxes(-1, -2) + T[..., None, :2, 2]


def _dlt_rows(src, dst):
    x, y = src[..., 0], src[..., 1]
    u, v = dst[..., 0], dst[..., 1]
    z = np.zeros_like(x)
    o = np.ones_like(x)
    r1 = np.stack([-x, -y, -o, z, z, z, u * x, u * y, u], axis=-1)
    r2 = np.stack([z, z, z, -x, -y, -o, v * x, v * y, v], axis=-1)
    return np.concatenate([r1, r2], axis=-2)


def fit_homography(src, dst) -> np.ndarray:
    """Normalised DLT; batched over leading axes. Bottom-right entry is 1."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    Ts = _normalizer(src)
    Td = _normalizer(dst)
    A = _dlt_rows(_apply(Ts, src), _apply(Td, dst))
    _, _, vt = np.linalg.svd(A)
    Hn = vt[..., -1, :].reshape(src.shape[:-2] + (3, 3))
    H = np.linalg.inv(Td) @ Hn @ Ts
    return H / H[..., 2:3, 2:3]


def project(H, pts):
    pts = np.asarray(pts, dtype=np.float64)
    hom = pts @ H[..., :2, :2].swapaxes(-1, -2) + H[..., None, :2, 2]
    den = pts @ H[..., 2, :2][..., :, None] + H[..., None, 2:3, 2]
    return hom / den


def ransac_homography(src, dst, iterations=1000, threshold=2.0, seed=0):
    """RANSAC over 4-point DLT hypotheses with a least-squares refit on inliers.

    Returns ``(H, inlier_mask)``.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = len(src)
    if n < 4:
        raise DegenerateFit(f"{n} correspondences")
    rng = np.random.default_rng(seed)
    samples = np.stack([rng.choice(n, 4, replace=False) for _ in range(iterations)])
    with np.errstate(all="ignore"):
        Hs = fit_homography(src[samples], dst[samples])
        proj = project(Hs, src[None])
        err = np.linalg.norm(proj - dst[None], axis=-1)
    err = np.where(np.isfinite(err), err, np.inf)
    counts = (err <= threshold).sum(axis=1)
    best = int(np.argmax(counts))
    inliers = err[best] <= threshold
    if inliers.sum() >= 4:
        H = fit_homography(src[inliers], dst[inliers])
        with np.errstate(all="ignore"):
            refit_err = np.linalg.norm(project(H, src) - dst, axis=-1)
        refit_inliers = refit_err <= threshold
        if refit_inliers.sum() >= inliers.sum():
            inliers = refit_inliers
    else:
        H = Hs[best]
    if not np.all(np.isfinite(H)):
        raise DegenerateFit("non-finite homography")
    return H, inliers


# -- grid construction -----------------------------------------------------

def cells_from_vertices(ref_vertices, nbr_vertices) -> np.ndarray:
    """Exact 4-point homographies per cell, neighbour -> reference."""
    def quads(v):
        return np.stack([v[:-1, :-1], v[:-1, 1:], v[1:, 1:], v[1:, :-1]], axis=-2)

    return fit_homography(quads(nbr_vertices), quads(ref_vertices))


def grid_from_motion(vertex_motion, width, height) -> HomographyGrid:
    vertex_motion = np.asarray(vertex_motion, dtype=np.float64)
    rows, cols = vertex_motion.shape[0] - 1, vertex_motion.shape[1] - 1
    if not vertex_motion.any():
        # exact identity, so a zero warp resamples on the lattice without rounding
        return identity_grid(width, height, rows, cols)
    probe = HomographyGrid(rows, cols, width, height, vertex_motion,
                           np.broadcast_to(np.eye(3), (rows, cols, 3, 3)))
    ref_v = probe.vertices()
    cells = cells_from_vertices(ref_v, ref_v - vertex_motion)
    return HomographyGrid(rows, cols, width, height, vertex_motion, cells)


def identity_grid(width, height, rows=16, cols=16) -> HomographyGrid:
    motion = np.zeros((rows + 1, cols + 1, 2))
    cells = np.broadcast_to(np.eye(3), (rows, cols, 3, 3)).copy()
    return HomographyGrid(rows, cols, width, height, motion, cells)


def global_grid(H, width, height, rows=16, cols=16) -> HomographyGrid:
    """Every cell carries the same homography ``H`` (neighbour -> reference)."""
    base = identity_grid(width, height, rows, cols)
    ref_v = base.vertices()
    motion = ref_v - project(np.linalg.inv(H), ref_v.reshape(-1, 2)).reshape(ref_v.shape)
    cells = np.broadcast_to(H / H[2, 2], (rows, cols, 3, 3)).copy()
    return HomographyGrid(rows, cols, width, height, motion, cells)


def _weighted_median(values, weights):
    """Row-wise weighted median of ``values`` (N,) under ``weights`` (V, N)."""
    order = np.argsort(values, kind="stable")
    w = weights[:, order]
    cum = np.cumsum(w, axis=1)
    total = cum[:, -1:]
    idx = np.argmax(cum >= 0.5 * total, axis=1)
    return values[order][idx]


def propagate_to_grid(keypoints: Keypoints, width, height, rows=16, cols=16, seed=0,
                      ransac_iterations=1000, threshold=2.0, radius_cells=1.5):
    """Fit a robust global homography, then add local median residuals per vertex."""
    if len(keypoints) < MIN_TRACKS:
        raise DegenerateFit(f"{len(keypoints)} keypoints")
    src = keypoints.positions
    dst = keypoints.targets
    H, inliers = ransac_homography(src, dst, ransac_iterations, threshold, seed)
    if inliers.sum() < MIN_TRACKS:
        raise DegenerateFit(f"{int(inliers.sum())} RANSAC inliers")

    base = identity_grid(width, height, rows, cols)
    ref_v = base.vertices().reshape(-1, 2)
    global_motion = ref_v - project(np.linalg.inv(H), ref_v)

    residual = dst - project(H, src)
    cw, ch = base.cell_size
    d = (ref_v[:, None, :] - dst[None, :, :]) / np.array([cw, ch])
    dist2 = (d ** 2).sum(axis=-1)
    weights = np.where(dist2 <= radius_cells ** 2, np.exp(-0.5 * dist2), 0.0)
    local = np.zeros_like(ref_v)
    has = weights.sum(axis=1) > 0
    if has.any():
        for k in range(2):
            local[has, k] = _weighted_median(residual[:, k], weights[has])
    motion = (global_motion + local).reshape(rows + 1, cols + 1, 2)
    return grid_from_motion(motion, width, height)


def estimate_grid(ref, neighbor, rows=16, cols=16, max_points=1000, seed=0):
    """Grid motion neighbour -> reference, with identity fallback.

    Returns ``(grid, ok)``.
    """
    h, w = np.shape(ref)[:2]
    try:
        kps = detect_and_track(ref, neighbor, max_points=max_points)
        return propagate_to_grid(kps, w, h, rows, cols, seed=seed), True
    except (TooFewKeypoints, DegenerateFit):
        return identity_grid(w, h, rows, cols), False


def estimate_global(ref, neighbor, rows=16, cols=16, max_points=1000, seed=0):
    """Single global homography as a uniform grid, with identity fallback."""
    h, w = np.shape(ref)[:2]
    try:
        kps = detect_and_track(ref, neighbor, max_points=max_points)
        H, inliers = ransac_homography(kps.positions, kps.targets, seed=seed)
        if inliers.sum() < MIN_TRACKS:
            raise DegenerateFit("too few inliers")
        return global_grid(H, w, h, rows, cols), True
    except (TooFewKeypoints, DegenerateFit):
        return identity_grid(w, h, rows, cols), False


# -- warping ---------------------------------------------------------------

def sampling_map(grid: HomographyGrid, pad: int, out_shape=None):
    """Neighbour-frame source coordinates for every pixel of the target canvas.

    Pixels in the padded band use the nearest border cell's homography.
    Returns ``(map_x, map_y)`` in unpadded neighbour coordinates.
    """
    if out_shape is None:
        out_shape = (grid.height + 2 * pad, grid.width + 2 * pad)
    hh, ww = out_shape
    qx = np.arange(ww, dtype=np.float64) - pad
    qy = np.arange(hh, dtype=np.float64) - pad
    cw, ch = grid.cell_size
    ci = np.clip(np.floor(qx / cw).astype(int), 0, grid.cols - 1)
    ri = np.clip(np.floor(qy / ch).astype(int), 0, grid.rows - 1)
    inv = grid.inverse_cells()
    Hp = inv[ri[:, None], ci[None, :]]  # (hh, ww, 3, 3)
    X, Y = np.meshgrid(qx, qy)
    den = Hp[..., 2, 0] * X + Hp[..., 2, 1] * Y + Hp[..., 2, 2]
    mx = (Hp[..., 0, 0] * X + Hp[..., 0, 1] * Y + Hp[..., 0, 2]) / den
    my = (Hp[..., 1, 0] * X + Hp[..., 1, 1] * Y + Hp[..., 1, 2]) / den
    return mx, my


def warp_canvas(source: Canvas, grid: HomographyGrid, pad: int, out_shape=None,
                return_map=False):
    """Backward-warp a (possibly padded) neighbour canvas onto a reference canvas."""
    mx, my = sampling_map(grid, pad, out_shape)
    image, valid = sample_bilinear(source.image, mx + source.pad, my + source.pad,
                                   mask=source.mask)
    out = Canvas(image, valid, pad)
    return (out, (mx, my)) if return_map else out


def warp_to_canvas(neighbor, grid: HomographyGrid, pad: int) -> Canvas:
    return warp_canvas(pad_frame(neighbor, 0), grid, pad)


def coarse_align_pass(frames, direction="forward", pad=None, rows=16, cols=16, seed=0):
    """Align each frame to its successor (forward) or predecessor (backward).

    Entry i of the forward pass is frame i warped onto frame i+1's canvas; the
    last entry is the padded last frame. The backward pass mirrors this, with
    the first entry the padded first frame.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    frames = list(frames)
    if not frames:
        raise ValueError("need at least one frame")
    pad = default_pad(frames[0].shape[1]) if pad is None else pad
    step = 1 if direction == "forward" else -1
    out = []
    for i, frame in enumerate(frames):
        j = i + step
        if 0 <= j < len(frames):
            grid, _ = estimate_grid(frames[j], frame, rows, cols, seed=seed)
            out.append(warp_to_canvas(frame, grid, pad))
        else:
            out.append(pad_frame(frame, pad))
    return out

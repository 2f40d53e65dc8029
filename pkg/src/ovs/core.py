"""Shared raster types and sampling conventions.

Frames are float arrays of shape (H, W, 3) with values in [0, 1]. Pixel
(row i, col j) sits at coordinate x = j, y = i; x grows rightward, y downward.
Masks are boolean (H, W) arrays. Flow stores (u, v) = (dx, dy) in pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
MASK_THRESHOLD = 0.5
# samples whose every contributing neighbour is valid; used when compositing
# repeatedly so that valid regions cannot creep outward by half a pixel per pass
FULL_SUPPORT = 1.0 - 1e-9


def as_frame(image) -> np.ndarray:
    """Validate and return a float64 (H, W, 3) frame."""
    frame = np.asarray(image, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise DimensionMismatch(f"expected (H, W, 3) frame, got {frame.shape}")
    if frame.shape[0] == 0 or frame.shape[1] == 0:
        raise DimensionMismatch("frame must be nonempty")
    if frame.min() < 0.0 or frame.max() > 1.0:
        raise ValueError("frame values must lie in [0, 1]")
    return frame


def default_pad(width: int) -> int:
    # 80 px at 640 wide, proportional elsewhere
    return int(round(width / 8))


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    width: int
    height: int

    @property
    def slices(self):
        return (slice(self.y, self.y + self.height), slice(self.x, self.x + self.width))


@dataclass(frozen=True, eq=False)
class Canvas:
    """A padded frame with a validity mask.

    ``inner`` is the rectangle the original frame occupies inside the padded
    raster. The out-of-boundary band starts with zero color and zero mask.
    """

    image: np.ndarray
    mask: np.ndarray
    pad: int

    def __post_init__(self):
        if self.image.shape[:2] != self.mask.shape:
            raise DimensionMismatch(
                f"image {self.image.shape[:2]} and mask {self.mask.shape} differ"
            )

    @property
    def shape(self):
        return self.mask.shape

    @property
    def inner(self) -> Rect:
        h, w = self.mask.shape
        return Rect(self.pad, self.pad, w - 2 * self.pad, h - 2 * self.pad)

    def crop_inner(self):
        sl = self.inner.slices
        return self.image[sl], self.mask[sl]

    def valid_area(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacement ``uv[..., 0] = dx``, ``uv[..., 1] = dy``."""

    uv: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.uv.shape[:2] != self.valid.shape or self.uv.shape[2:] != (2,):
            raise DimensionMismatch(
                f"flow {self.uv.shape} does not match mask {self.valid.shape}"
            )

    @property
    def shape(self):
        return self.valid.shape

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape + (2,)), np.ones(shape, dtype=bool))

    def masked(self, mask: np.ndarray) -> "FlowField":
        """Apply the masking contract: zero displacement wherever mask is 0."""
        mask = np.asarray(mask, dtype=bool)
        return FlowField(self.uv * mask[..., None], self.valid & mask)


def pad_frame(frame: np.ndarray, pad: int) -> Canvas:
    if pad < 0:
        raise ValueError("pad must be non-negative")
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape[:2]
    image = np.zeros((h + 2 * pad, w + 2 * pad, frame.shape[2]))
    mask = np.zeros((h + 2 * pad, w + 2 * pad), dtype=bool)
    image[pad:pad + h, pad:pad + w] = frame
    mask[pad:pad + h, pad:pad + w] = True
    return Canvas(image, mask, pad)


def luma(frame: np.ndarray) -> np.ndarray:
    return np.asarray(frame, dtype=np.float64)[..., :3] @ LUMA_WEIGHTS


def sobel_edges(frame: np.ndarray) -> np.ndarray:
    """Gradient magnitude of the BT.601 luminance, replicate borders."""
    gray = luma(frame)
    if gray.size == 0:
        raise DimensionMismatch("frame must be nonempty")
    # separable form: central difference first, so flat regions give exact zeros
    p = np.pad(gray, 1, mode="edge")
    dx = p[:, 2:] - p[:, :-2]
    dy = p[2:, :] - p[:-2, :]
    gx = dx[:-2] + 2.0 * dx[1:-1] + dx[2:]
    gy = dy[:, :-2] + 2.0 * dy[:, 1:-1] + dy[:, 2:]
    return np.hypot(gx, gy)


def sample_bilinear(raster, x, y, mask=None, min_weight=MASK_THRESHOLD):
    """Sample ``raster`` at fractional coordinates.

    Returns ``(values, valid)``. Neighbours outside the raster, or with mask 0,
    carry no weight; a sample is valid when the retained bilinear weight is at
    least ``min_weight``, and its value is the weight-normalised blend.
    Invalid samples are 0. On a fully valid raster this is plain bilinear
    interpolation.
    """
    raster = np.asarray(raster, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    h, w = raster.shape[:2]
    trailing = raster.shape[2:]

    finite = np.isfinite(x) & np.isfinite(y)
    xs = np.where(finite, x, -10.0)
    ys = np.where(finite, y, -10.0)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    acc = np.zeros(x.shape + trailing)
    wsum = np.zeros(x.shape)
    for dy, dx, wgt in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        yy = y0 + dy
        xx = x0 + dx
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w) & (wgt > 0)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        if mask is not None:
            inside &= np.asarray(mask, dtype=bool)[yc, xc]
        wk = np.where(inside, wgt, 0.0)
        vals = raster[yc, xc]
        if trailing:
            acc += wk.reshape(wk.shape + (1,) * len(trailing)) * vals
        else:
            acc += wk * vals
        wsum += wk

    valid = wsum >= min_weight
    safe = np.where(valid, wsum, 1.0)
    if trailing:
        out = acc / safe.reshape(safe.shape + (1,) * len(trailing))
        out[~valid] = 0.0
    else:
        out = np.where(valid, acc / safe, 0.0)
    return out, valid


def pixel_grid(shape):
    """Return (x, y) coordinate arrays for a raster of ``shape``."""
    h, w = shape
    return np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))


def binarize(mask_values) -> np.ndarray:
    return np.asarray(mask_values, dtype=np.float64) >= MASK_THRESHOLD

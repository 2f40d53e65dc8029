"""Flow reversal by bilinear forward splatting."""

from __future__ import annotations

import numpy as np

from .core import MASK_THRESHOLD, FlowField


def splat(values, x, y, shape):
    """Bilinearly splat ``values`` (N, C) at positions (x, y) onto ``shape``.

    Returns ``(accumulated, weight)``. Accumulation uses ``np.bincount`` so the
    result does not depend on traversal order beyond floating-point summation
    in index order.
    """
    h, w = shape
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    acc = np.zeros((h * w, values.shape[1]))
    wsum = np.zeros(h * w)
    for dy, dx, wgt in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        xx = x0 + dx
        yy = y0 + dy
        keep = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h) & (wgt > 0)
        idx = yy[keep] * w + xx[keep]
        wk = wgt[keep]
        wsum += np.bincount(idx, weights=wk, minlength=h * w)
        for c in range(values.shape[1]):
            acc[:, c] += np.bincount(idx, weights=wk * values[keep, c], minlength=h * w)
    return acc.reshape(h, w, -1), wsum.reshape(h, w)


def reverse_flow(flow: FlowField, mask) -> tuple[FlowField, np.ndarray]:
    """Reverse a flow field and return the shared-view mask.

    Every source pixel p with mask 1 deposits -flow(p) at p + flow(p). The
    reversed flow at q is the weighted average of deposits; the shared view
    is where the accumulated weight reaches 0.5.
    """
    mask = np.asarray(mask, dtype=bool) & flow.valid
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    uv = flow.uv[ys, xs]
    acc, wsum = splat(-uv, xs + uv[:, 0], ys + uv[:, 1], (h, w))
    shared = wsum >= MASK_THRESHOLD
    out = np.zeros((h, w, 2))
    out[shared] = acc[shared] / wsum[shared, None]
    return FlowField(out, shared), shared

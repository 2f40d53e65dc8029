"""Flow-driven extrapolation and canvas compositing."""

from __future__ import annotations

import numpy as np

from .core import MASK_THRESHOLD, Canvas, FlowField, pixel_grid, sample_bilinear
from .errors import DimensionMismatch


def _flow_arrays(flow):
    if isinstance(flow, FlowField):
        return flow.uv, flow.valid
    uv = np.asarray(flow, dtype=np.float64)
    return uv, np.ones(uv.shape[:2], dtype=bool)


def extrapolate(source, flow, min_weight=MASK_THRESHOLD):
    """Backward-sample ``source`` at q + flow(q).

    ``source`` may be a Canvas (returns a Canvas), a boolean mask (returns a
    binarised mask) or a float raster such as an edge map (returns
    ``(values, valid)``). Samples outside the source, on source-mask 0, or
    where the flow is invalid come back invalid. ``min_weight`` is the
    retained bilinear weight a sample needs to count as valid.
    """
    uv, fvalid = _flow_arrays(flow)
    if isinstance(source, Canvas):
        shape = source.shape
    else:
        shape = np.shape(source)[:2]
    if uv.shape[:2] != shape:
        raise DimensionMismatch(f"flow {uv.shape[:2]} does not cover source {shape}")
    X, Y = pixel_grid(shape)
    sx = X + uv[..., 0]
    sy = Y + uv[..., 1]
    if isinstance(source, Canvas):
        image, valid = sample_bilinear(source.image, sx, sy, mask=source.mask,
                                       min_weight=min_weight)
        valid &= fvalid
        image[~valid] = 0.0
        return Canvas(image, valid, source.pad)
    source = np.asarray(source)
    if source.dtype == bool:
        _, valid = sample_bilinear(source.astype(np.float64), sx, sy, mask=source,
                                   min_weight=min_weight)
        return valid & fvalid
    values, valid = sample_bilinear(source, sx, sy, min_weight=min_weight)
    valid &= fvalid
    return np.where(valid, values, 0.0), valid


def composite(ref: Canvas, contribution: Canvas) -> Canvas:
    """Fill invalid reference pixels from ``contribution``; valid ones never change."""
    if ref.shape != contribution.shape:
        raise DimensionMismatch(f"canvases {ref.shape} and {contribution.shape} differ")
    take = ~ref.mask & contribution.mask
    image = ref.image.copy()
    image[take] = contribution.image[take]
    return Canvas(image, ref.mask | take, ref.pad)

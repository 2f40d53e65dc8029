"""Flow-based refinement of a coarsely aligned neighbour canvas."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import compute_affinity, init_refined_flow, propagate
from .canvas import extrapolate
from .config import AffinityConfig, PropagationConfig
from .core import MASK_THRESHOLD, Canvas, FlowField, pixel_grid, sample_bilinear, sobel_edges
from .errors import DimensionMismatch, EmptySharedView
from .flow import estimate_masked_flow
from .reverse import reverse_flow


@dataclass
class FineResult:
    canvas: Canvas
    flow: FlowField  # aligned -> reference displacement, whole canvas
    ok: bool
    sweeps: int = 0
    shared: np.ndarray | None = None


def refine_flow(ref: Canvas, aligned: Canvas, estimator, affinity=None, propagation=None,
                pair=None) -> FineResult:
    """Propagated aligned-to-reference flow over the whole canvas.

    The returned ``canvas`` is ``aligned`` itself; :func:`apply_refinement`
    does the resampling.
    """
    affinity = affinity or AffinityConfig()
    propagation = propagation or PropagationConfig()
    if ref.shape != aligned.shape:
        raise DimensionMismatch(f"canvases {ref.shape} and {aligned.shape} differ")

    fwd = estimate_masked_flow(estimator, ref, aligned, pair=pair)
    # reference pixels whose match falls off the aligned support carry no information
    lands = extrapolate(aligned.mask, fwd)
    rev, shared = reverse_flow(fwd.masked(lands), ref.mask)
    shared &= aligned.mask
    domain = np.ones(ref.shape, dtype=bool)
    try:
        b0 = init_refined_flow(rev, shared, domain)
    except EmptySharedView:
        return FineResult(aligned, FlowField.zeros(ref.shape), False, 0, shared)

    field = compute_affinity(ref, aligned, sobel_edges(ref.image), sobel_edges(aligned.image),
                             radius=affinity.radius, sigma_color=affinity.sigma_color,
                             sigma_edge=affinity.sigma_edge,
                             lambda_cap=propagation.lambda_cap)
    result = propagate(b0, field, shared, max_sweeps=propagation.max_sweeps,
                       tolerance=propagation.tolerance_px,
                       anchor_ratio=propagation.anchor_ratio)
    return FineResult(aligned, result.flow, True, result.sweeps, shared)


def apply_refinement(aligned: Canvas, flow: FlowField, source: Canvas | None = None,
                     source_map=None, min_weight=MASK_THRESHOLD) -> Canvas:
    """Sample ``aligned`` at q - B(q).

    When ``source`` and ``source_map`` (the coarse sampling map that produced
    ``aligned``, in unpadded source coordinates) are given, pixels are read
    straight from ``source`` through the composed map, so the content is
    resampled once.
    """
    back = FlowField(-flow.uv, flow.valid)
    if source is None or source_map is None:
        return extrapolate(aligned, back, min_weight)
    return _resample_through(aligned, back, source, source_map, min_weight)


def fine_align(ref: Canvas, aligned: Canvas, estimator, affinity=None, propagation=None,
               pair=None, source: Canvas | None = None, source_map=None) -> FineResult:
    """Refine ``aligned`` against ``ref`` and extend the correction past the shared view.

    The propagated flow B says aligned pixel q corresponds to reference pixel
    q + B(q), so the refined canvas samples the aligned content at q - B(q).
    Without a shared view the input comes back unchanged with ``ok`` False.
    """
    res = refine_flow(ref, aligned, estimator, affinity, propagation, pair)
    if res.ok:
        res.canvas = apply_refinement(aligned, res.flow, source, source_map)
    return res


def _resample_through(aligned, back, source, source_map, min_weight):
    valid = extrapolate(aligned.mask, back, min_weight)
    X, Y = pixel_grid(aligned.shape)
    qx = X + back.uv[..., 0]
    qy = Y + back.uv[..., 1]
    mx, _ = sample_bilinear(source_map[0], qx, qy)
    my, _ = sample_bilinear(source_map[1], qx, qy)
    image, ok = sample_bilinear(source.image, mx + source.pad, my + source.pad, mask=source.mask,
                                min_weight=min_weight)
    valid &= ok
    image[~valid] = 0.0
    return Canvas(image, valid, aligned.pad)

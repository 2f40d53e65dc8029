"""Affinity kernels and anchored flow propagation.

Kernels hold (2r+1)^2 weights per pixel; offset (a, b) (row, column) lives at
index k = (a + r)(2r + 1) + (b + r) and refers to the neighbour at
(u - a, v - b). The centre index r(2r + 1) + r carries the anchor weight.
Neighbour reads outside the raster clamp to the border.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.spatial import cKDTree

from .core import Canvas, FlowField
from .errors import DimensionMismatch, EmptySharedView


def kernel_offsets(radius: int):
    """Row/column offsets (a, b) in kernel index order, and the centre index."""
    span = np.arange(-radius, radius + 1)
    a, b = np.meshgrid(span, span, indexing="ij")
    return a.ravel(), b.ravel(), radius * (2 * radius + 1) + radius


@dataclass(frozen=True, eq=False)
class AffinityField:
    kernel: np.ndarray  # (H, W, (2r+1)^2)
    radius: int

    @property
    def center(self):
        return self.radius * (2 * self.radius + 1) + self.radius

    def off_center_sum(self):
        off = self.kernel.copy()
        off[..., self.center] = 0.0
        return off.sum(axis=-1)


def normalize_kernel(raw, radius, lambda_cap=0.99):
    """Scale off-centre weights to sum to min(S, lambda_cap); centre gets the rest."""
    raw = np.array(raw, dtype=np.float64, copy=True)
    _, _, kc = kernel_offsets(radius)
    raw[..., kc] = 0.0
    total = raw.sum(axis=-1)
    lam = np.minimum(total, lambda_cap)
    scale = np.divide(lam, total, out=np.zeros_like(total), where=total > 0)
    kernel = raw * scale[..., None]
    kernel[..., kc] = 0.0
    # rounding can leave the off-centre sum an ulp above the cap; shave it off
    off = kernel.sum(axis=-1)
    for _ in range(8):
        over = off > lam
        if not over.any():
            break
        kernel[over] *= np.nextafter(lam[over] / off[over], 0.0)[:, None]
        off = kernel.sum(axis=-1)
    kernel[..., kc] = 1.0 - off
    return kernel


@numba.njit(cache=True, nogil=True)
def _raw_weights(guide, edges, off_a, off_b, kc, inv_c, inv_e, out):
    h, w, nc = guide.shape
    nk = out.shape[2]
    for u in range(h):
        for v in range(w):
            for k in range(nk):
                if k == kc:
                    out[u, v, k] = 0.0
                    continue
                uu = min(max(u - off_a[k], 0), h - 1)
                vv = min(max(v - off_b[k], 0), w - 1)
                dc = 0.0
                for c in range(nc):
                    d = guide[u, v, c] - guide[uu, vv, c]
                    dc += d * d
                de = edges[u, v] - edges[uu, vv]
                out[u, v, k] = np.exp(-dc * inv_c - de * de * inv_e)


def compute_affinity(ref: Canvas, aligned: Canvas, ref_edges, aligned_edges, radius=4,
                     sigma_color=0.1, sigma_edge=0.2, lambda_cap=0.99) -> AffinityField:
    """Bilateral colour/edge affinity on the guide image.

    The guide takes the aligned neighbour where it is valid and the reference
    elsewhere.
    """
    if radius < 1:
        raise ValueError("radius must be at least 1")
    if ref.shape != aligned.shape or np.shape(ref_edges) != ref.shape \
            or np.shape(aligned_edges) != ref.shape:
        raise DimensionMismatch("affinity inputs differ in size")
    sel = aligned.mask
    guide = np.where(sel[..., None], aligned.image, ref.image)
    edges = np.where(sel, aligned_edges, ref_edges)
    a_off, b_off, kc = kernel_offsets(radius)
    h, w = sel.shape
    raw = np.empty((h, w, len(a_off)))
    _raw_weights(np.ascontiguousarray(guide, dtype=np.float64),
                 np.ascontiguousarray(edges, dtype=np.float64),
                 a_off.astype(np.int64), b_off.astype(np.int64), kc,
                 1.0 / (2 * sigma_color ** 2), 1.0 / (2 * sigma_edge ** 2), raw)
    return AffinityField(normalize_kernel(raw, radius, lambda_cap), radius)


def init_refined_flow(rev_flow: FlowField, shared, domain) -> FlowField:
    """Initial flow: reversed flow on the shared view, nearest shared value elsewhere.

    Nearest means Euclidean pixel distance; ties go to the smaller linear index.
    """
    shared = np.asarray(shared, dtype=bool)
    domain = np.asarray(domain, dtype=bool)
    if not shared.any():
        raise EmptySharedView("no pixel has a correspondence in the reference")
    h, w = shared.shape
    out = np.zeros((h, w, 2))
    out[shared] = rev_flow.uv[shared]
    todo = domain & ~shared
    if todo.any():
        sy, sx = np.nonzero(shared)
        src_index = sy * w + sx
        ty, tx = np.nonzero(todo)
        tree = cKDTree(np.stack([sy, sx], axis=1))
        k = min(8, len(sy))
        _, idx = tree.query(np.stack([ty, tx], axis=1), k=k)
        idx = idx.reshape(len(ty), k)
        d2 = (sy[idx] - ty[:, None]) ** 2 + (sx[idx] - tx[:, None]) ** 2
        best = d2.min(axis=1, keepdims=True)
        cand = np.where(d2 == best, src_index[idx], np.iinfo(np.int64).max)
        pick = cand.min(axis=1)
        out[ty, tx] = rev_flow.uv.reshape(-1, 2)[pick]
    out[~domain] = 0.0
    return FlowField(out, domain.copy())


@numba.njit(cache=True, nogil=True)
def _sweep(kernel, off_a, off_b, kc, b0, bt, shared, anchor, out):
    h, w, nk = kernel.shape
    change = 0.0
    for u in range(h):
        for v in range(w):
            kw = kernel[u, v, kc]
            acc0 = kw * b0[u, v, 0]
            acc1 = kw * b0[u, v, 1]
            for k in range(nk):
                if k == kc:
                    continue
                uu = min(max(u - off_a[k], 0), h - 1)
                vv = min(max(v - off_b[k], 0), w - 1)
                kw = kernel[u, v, k]
                acc0 += kw * bt[uu, vv, 0]
                acc1 += kw * bt[uu, vv, 1]
            if shared[u, v]:
                acc0 = (1.0 - anchor) * acc0 + anchor * b0[u, v, 0]
                acc1 = (1.0 - anchor) * acc1 + anchor * b0[u, v, 1]
            out[u, v, 0] = acc0
            out[u, v, 1] = acc1
            d0 = abs(acc0 - bt[u, v, 0])
            d1 = abs(acc1 - bt[u, v, 1])
            if d0 > change:
                change = d0
            if d1 > change:
                change = d1
    return change


def propagation_sweep(bt, b0, affinity: AffinityField, shared, anchor_ratio=0.9):
    """One Jacobi sweep followed by the slow update on the shared view.

    Returns ``(next, max_abs_change)``.
    """
    a_off, b_off, kc = kernel_offsets(affinity.radius)
    out = np.empty_like(bt, dtype=np.float64)
    change = _sweep(np.ascontiguousarray(affinity.kernel, dtype=np.float64),
                    a_off.astype(np.int64), b_off.astype(np.int64), kc,
                    np.ascontiguousarray(b0, dtype=np.float64),
                    np.ascontiguousarray(bt, dtype=np.float64),
                    np.ascontiguousarray(shared, dtype=np.bool_), float(anchor_ratio), out)
    return out, change


@dataclass
class PropagationResult:
    flow: FlowField
    sweeps: int
    changes: list = field(default_factory=list)
    converged: bool = False
    history: list | None = None


def propagate(b0: FlowField, affinity: AffinityField, shared, max_sweeps=200,
              tolerance=0.01, anchor_ratio=0.9, keep_history=False) -> PropagationResult:
    """Iterate sweeps from ``b0`` until the sup-norm change drops below ``tolerance``."""
    anchor = b0.uv
    bt = anchor.copy()
    changes = []
    history = [bt.copy()] if keep_history else None
    converged = False
    for _ in range(max_sweeps):
        bt, change = propagation_sweep(bt, anchor, affinity, shared, anchor_ratio)
        changes.append(change)
        if keep_history:
            history.append(bt.copy())
        if change < tolerance:
            converged = True
            break
    if not np.all(np.isfinite(bt)):
        raise FloatingPointError("propagation diverged")
    uv = np.where(b0.valid[..., None], bt, 0.0)
    return PropagationResult(FlowField(uv, b0.valid.copy()), len(changes), changes,
                             converged, history)

"""Iterative out-of-boundary expansion over a frame sequence."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .canvas import composite
from .coarse import estimate_global, estimate_grid, sampling_map
from .config import MODES, Config, thread_cap
from .core import FULL_SUPPORT, Canvas, pad_frame, sample_bilinear
from .fine import apply_refinement, refine_flow
from .flow import make_estimator

log = logging.getLogger(__name__)

MODE_ALIASES = {"coarse": "coarse_only", "fine": "fine_only", "ovs": "full"}


def normalize_mode(mode: str) -> str:
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    return mode


@dataclass
class ExpandResult:
    canvases: list
    snapshots: dict = field(default_factory=dict)  # iteration -> list of Canvas
    stats: list = field(default_factory=list)  # one dict per iteration
    setup: dict = field(default_factory=dict)  # per-pair alignment cost


class _Aligner:
    """Pairwise alignment with per-pair caches.

    The coarse grid and the fine correction of a pair (i, j) depend only on
    the original frames, so they are computed once and then applied to
    whatever canvas frame j has grown into.
    """

    def __init__(self, frames, pad, mode, config: Config, estimator):
        self.frames = frames
        self.pad = pad
        self.mode = mode
        self.config = config
        self.estimator = estimator
        self.padded = [pad_frame(f, pad) for f in frames]
        self.grids = {}
        self.maps = {}
        self.flows = {}

    def grid(self, i, j):
        if (i, j) not in self.grids:
            c = self.config.coarse
            fit = estimate_global if self.mode == "global" else estimate_grid
            self.grids[(i, j)] = fit(self.frames[i], self.frames[j], rows=c.grid_rows,
                                     cols=c.grid_cols, max_points=c.max_points,
                                     seed=self.config.run.seed)
        return self.grids[(i, j)]

    def sampling(self, i, j):
        if (i, j) not in self.maps:
            grid, _ = self.grid(i, j)
            self.maps[(i, j)] = sampling_map(grid, self.pad, self.padded[i].shape)
        return self.maps[(i, j)]

    def compute_flow(self, i, j):
        """Fine correction for pair (i, j), without touching the cache."""
        ref = self.padded[i]
        if self.mode == "fine_only":
            aligned = self.padded[j]
        else:
            grid, ok = self.grid(i, j)
            if not ok:
                return None
            aligned = _sample(self.padded[j], self.sampling(i, j), self.pad)
        res = refine_flow(ref, aligned, self.estimator, self.config.affinity,
                          self.config.propagation, pair=(i, j))
        return res if res.ok else None

    def flow(self, i, j):
        if (i, j) not in self.flows:
            self.flows[(i, j)] = self.compute_flow(i, j)
        return self.flows[(i, j)]

    def contribution(self, i, j, ref: Canvas, src: Canvas):
        """Canvas ``src`` of frame j aligned onto frame i, or None."""
        if self.mode == "fine_only":
            res = self.flow(i, j)
            return None if res is None else apply_refinement(src, res.flow,
                                                             min_weight=FULL_SUPPORT)
        grid, ok = self.grid(i, j)
        if not ok:
            return None
        smap = self.sampling(i, j)
        warped = _sample(src, smap, self.pad)
        if not (warped.mask & ~ref.mask).any():
            return None
        if self.mode in ("coarse_only", "global"):
            return warped
        res = self.flow(i, j)
        if res is None:
            return None
        return apply_refinement(warped, res.flow, src, smap, min_weight=FULL_SUPPORT)


def _sample(src: Canvas, smap, pad):
    image, valid = sample_bilinear(src.image, smap[0] + src.pad, smap[1] + src.pad,
                                   mask=src.mask, min_weight=FULL_SUPPORT)
    return Canvas(image, valid, pad)


def expand_sequence(frames, iterations=None, mode=None, config: Config | None = None,
                    estimator=None, snapshots=(), workers=None) -> ExpandResult:
    """Grow every frame's canvas by compositing aligned neighbours.

    Iteration k aligns the canvases produced by iteration k - 1 for frames
    i - 1 and i + 1 onto frame i, so content reaches i from frames up to k
    steps away. Contributions are composited nearest-first (previous canvas,
    then i - 1, then i + 1). A pair is skipped when neither canvas changed
    since it was last aligned, since it would repeat the same contribution.
    """
    config = config or Config()
    iterations = config.expand.iterations if iterations is None else int(iterations)
    mode = normalize_mode(config.expand.mode if mode is None else mode)
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    if not frames:
        raise ValueError("no frames")
    shape = frames[0].shape
    if any(f.shape != shape for f in frames):
        raise ValueError("frames differ in size")
    pad = config.pad_for(shape[1])
    estimator = estimator or make_estimator(config.flow.estimator)
    workers = thread_cap() if workers is None else max(1, int(workers))

    canvases = [pad_frame(f, pad) for f in frames]
    n = len(frames)
    wanted = set(int(s) for s in snapshots)
    result = ExpandResult(canvases)
    if 0 in wanted:
        result.snapshots[0] = list(canvases)
    if iterations == 0 or n < 2:
        for k in wanted:
            result.snapshots[k] = list(canvases)
        return result

    aligner = _Aligner(frames, pad, mode, config, estimator)
    pairs = [(i, j) for i in range(n) for j in (i - 1, i + 1) if 0 <= j < n]
    t0 = time.perf_counter()
    if mode != "fine_only":
        for i, j in pairs:
            aligner.grid(i, j)
            aligner.sampling(i, j)
    if mode in ("full", "fine_only"):
        # pair corrections are pure functions of the frames, so order does not matter
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                flows = list(pool.map(lambda p: aligner.compute_flow(*p), pairs))
        else:
            flows = [aligner.compute_flow(*p) for p in pairs]
        aligner.flows.update(zip(pairs, flows))
    result.setup = {
        "seconds": time.perf_counter() - t0,
        "pairs": len(pairs),
        "failed_pairs": sum(not aligner.grid(*p)[1] for p in pairs) if mode != "fine_only"
        else 0,
        "sweeps": sum(f.sweeps for f in aligner.flows.values() if f is not None),
    }

    version = [0] * n
    last_used = {}
    for k in range(1, iterations + 1):
        t0 = time.perf_counter()
        prev = canvases
        prev_version = list(version)

        def expand_one(i):
            cur = prev[i]
            used = 0
            for j in (i - 1, i + 1):
                if j < 0 or j >= n or cur.mask.all():
                    continue
                if last_used.get((i, j)) == (prev_version[i], prev_version[j]):
                    continue
                used += 1
                contrib = aligner.contribution(i, j, cur, prev[j])
                if contrib is not None:
                    cur = composite(cur, contrib)
            return cur, used

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                outs = list(pool.map(expand_one, range(n)))
        else:
            outs = [expand_one(i) for i in range(n)]

        for i, j in pairs:
            last_used[(i, j)] = (prev_version[i], prev_version[j])
        canvases = []
        for i, (cur, _) in enumerate(outs):
            if cur.valid_area() != prev[i].valid_area():
                version[i] += 1
            canvases.append(cur)
        stat = {
            "iteration": k,
            "seconds": time.perf_counter() - t0,
            "pairs_used": sum(o[1] for o in outs),
            "valid_fraction": float(np.mean([c.mask.mean() for c in canvases])),
        }
        result.stats.append(stat)
        log.info("iteration %d: %d pairs, valid %.4f, %.1fs", k, stat["pairs_used"],
                 stat["valid_fraction"], stat["seconds"])
        if k in wanted:
            result.snapshots[k] = list(canvases)
        if version == prev_version:
            # nothing grew, so every later iteration would skip every pair
            for later in range(k + 1, iterations + 1):
                if later in wanted:
                    result.snapshots[later] = list(canvases)
            break
    result.canvases = canvases
    return result

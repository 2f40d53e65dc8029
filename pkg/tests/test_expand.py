import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ovs.ablate import band_mask
from ovs.canvas import composite, extrapolate
from ovs.coarse import project
from ovs.config import Config
from ovs.core import Canvas, FlowField, pad_frame
from ovs.errors import DimensionMismatch
from ovs.expand import expand_sequence, normalize_mode
from ovs.metrics import psnr
from ovs.synth import JitterSpec, default_suite, relative_homography

SNAPS = (0, 1, 2, 3)


@pytest.fixture(scope="module")
def video():
    return default_suite(scale=0.25, spec=JitterSpec(n_frames=6))


@pytest.fixture(scope="module")
def runs(video):
    return {mode: expand_sequence(video.frames, 3, mode, snapshots=SNAPS)
            for mode in ("global", "coarse_only", "fine_only", "full")}


def flow(u, v, shape):
    return FlowField(np.broadcast_to([u, v], shape + (2,)).copy(), np.ones(shape, bool))


class TestExtrapolate:
    def test_zero_flow(self, rng):
        c = Canvas(rng.random((5, 6, 3)), rng.random((5, 6)) < 0.7, 0)
        c = Canvas(c.image * c.mask[..., None], c.mask, 0)
        out = extrapolate(c, flow(0, 0, (5, 6)))
        assert np.array_equal(out.image, c.image) and np.array_equal(out.mask, c.mask)
        edges = rng.random((5, 6))
        vals, ok = extrapolate(edges, flow(0, 0, (5, 6)))
        assert np.array_equal(vals, edges) and ok.all()
        assert np.array_equal(extrapolate(c.mask, flow(0, 0, (5, 6))), c.mask)

    def test_integer_shift(self, rng):
        img = rng.random((4, 5, 3))
        out = extrapolate(pad_frame(img, 0), flow(1, 0, (4, 5)))
        assert np.array_equal(out.image[:, :-1], img[:, 1:])
        assert out.mask[:, :-1].all() and not out.mask[:, -1].any()

    def test_half_pixel(self):
        raster = np.array([[0.0, 1.0]] * 3)
        vals, ok = extrapolate(raster, flow(0.5, 0, (3, 2)))
        assert np.all(vals[:, 0] == 0.5) and ok[:, 0].all()

    def test_samples_on_invalid_source_are_invalid(self):
        mask = np.zeros((3, 4), bool)
        mask[:, :2] = True
        out = extrapolate(Canvas(np.ones((3, 4, 3)) * mask[..., None], mask, 0),
                          flow(2, 0, (3, 4)))
        assert not out.mask.any()

    def test_size_mismatch(self):
        with pytest.raises(DimensionMismatch):
            extrapolate(np.zeros((3, 3)), flow(0, 0, (3, 4)))


class TestComposite:
    def test_invalid_contribution(self, rng):
        ref = Canvas(rng.random((4, 4, 3)), rng.random((4, 4)) < 0.5, 0)
        out = composite(ref, Canvas(np.ones((4, 4, 3)), np.zeros((4, 4), bool), 0))
        assert np.array_equal(out.image, ref.image) and np.array_equal(out.mask, ref.mask)

    def test_full_ref(self, rng):
        ref = Canvas(rng.random((4, 4, 3)), np.ones((4, 4), bool), 0)
        out = composite(ref, Canvas(np.ones((4, 4, 3)), np.ones((4, 4), bool), 0))
        assert np.array_equal(out.image, ref.image)

    @given(arrays(np.bool_, (5, 6)), arrays(np.bool_, (5, 6)))
    def test_priority_and_union(self, m1, m2):
        a = Canvas(np.full((5, 6, 3), 0.25) * m1[..., None], m1, 0)
        b = Canvas(np.full((5, 6, 3), 0.75) * m2[..., None], m2, 0)
        out = composite(a, b)
        assert np.array_equal(out.mask, m1 | m2)
        assert np.all(out.image[m1] == 0.25)
        assert np.all(out.image[~m1 & m2] == 0.75)
        assert np.all(out.image[~(m1 | m2)] == 0)

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            composite(pad_frame(np.zeros((2, 2, 3)), 1), pad_frame(np.zeros((2, 2, 3)), 2))


class TestExpandSequence:
    def test_zero_iterations(self, video):
        res = expand_sequence(video.frames, 0)
        for c, f in zip(res.canvases, video.frames):
            ref = pad_frame(f, video.pad)
            assert np.array_equal(c.image, ref.image) and np.array_equal(c.mask, ref.mask)

    @pytest.mark.parametrize("mode", ["global", "coarse_only", "fine_only", "full"])
    def test_monotone_growth_and_interior(self, runs, video, mode):
        snaps = runs[mode].snapshots
        for k in SNAPS[1:]:
            for before, after in zip(snaps[k - 1], snaps[k]):
                assert np.all(after.mask >= before.mask)
                assert np.array_equal(after.image[before.mask], before.image[before.mask])
        for c, f in zip(snaps[3], video.frames):
            image, mask = c.crop_inner()
            assert np.array_equal(image, f) and mask.all()
            assert c.mask.dtype == bool

    def test_expansion_happens(self, runs, video):
        inner = video.frame_size[0] * video.frame_size[1]
        for mode in runs:
            assert sum(c.valid_area() for c in runs[mode].canvases) > len(video.frames) * inner

    def test_band_valid_where_neighbours_saw_it(self, runs, video):
        w, h = video.frame_size
        pad = video.pad
        for i, c in enumerate(runs["full"].snapshots[1]):
            hh, ww = c.shape
            ys, xs = np.mgrid[0:hh, 0:ww]
            pts = np.stack([xs.ravel() - pad, ys.ravel() - pad], axis=1).astype(float)
            seen = np.zeros(hh * ww, bool)
            for j in (i - 1, i + 1):
                if 0 <= j < len(video.frames):
                    q = project(relative_homography(video.trajectory, i, j, (w, h), pad), pts)
                    # two pixels of margin for the bilinear footprint and flow error
                    seen |= (q[:, 0] >= 2) & (q[:, 0] <= w - 3) & (q[:, 1] >= 2) & (q[:, 1] <= h - 3)
            seen = seen.reshape(hh, ww)
            assert c.mask[seen].all()
            band = band_mask(c)
            if band.any():
                assert psnr(c.image, video.gt[i].image, band) >= 30

    def test_valid_fraction_non_decreasing(self, runs):
        stats = runs["full"].stats
        fr = [s["valid_fraction"] for s in stats]
        assert fr == sorted(fr)

    def test_deterministic(self, video, runs):
        again = expand_sequence(video.frames, 3, "full")
        for a, b in zip(again.canvases, runs["full"].canvases):
            assert np.array_equal(a.image, b.image) and np.array_equal(a.mask, b.mask)

    def test_threaded_matches_sequential(self, video, runs):
        par = expand_sequence(video.frames, 3, "full", workers=2)
        for a, b in zip(par.canvases, runs["full"].canvases):
            assert np.array_equal(a.image, b.image) and np.array_equal(a.mask, b.mask)

    def test_single_frame(self, video):
        res = expand_sequence(video.frames[:1], 5)
        assert np.array_equal(res.canvases[0].mask, pad_frame(video.frames[0], video.pad).mask)

    def test_config_pad(self, video):
        cfg = Config().with_overrides({"canvas.pad": 7})
        res = expand_sequence(video.frames[:2], 0, config=cfg)
        assert res.canvases[0].pad == 7

    def test_errors(self, video):
        with pytest.raises(ValueError):
            expand_sequence(video.frames, -1)
        with pytest.raises(ValueError):
            expand_sequence([], 1)
        with pytest.raises(ValueError):
            expand_sequence(video.frames, 1, mode="sideways")


def test_mode_aliases():
    assert normalize_mode("coarse") == "coarse_only"
    assert normalize_mode("fine") == "fine_only"
    assert normalize_mode("ovs") == "full"
    assert normalize_mode("global") == "global"

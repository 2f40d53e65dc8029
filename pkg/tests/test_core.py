import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ovs.core import (
    FULL_SUPPORT,
    Canvas,
    FlowField,
    as_frame,
    default_pad,
    luma,
    pad_frame,
    sample_bilinear,
    sobel_edges,
)
from ovs.errors import DimensionMismatch

unit = st.floats(0.0, 1.0, allow_nan=False)


def frames(max_side=12):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side)).flatmap(
        lambda hw: arrays(np.float64, (hw[0], hw[1], 3), elements=unit))


def brute_sobel(frame):
    """Explicit 3x3 correlation with replicated borders, one pixel at a time."""
    gray = 0.299 * frame[..., 0] + 0.587 * frame[..., 1] + 0.114 * frame[..., 2]
    h, w = gray.shape
    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            gx = gy = 0.0
            for di in range(3):
                for dj in range(3):
                    v = gray[min(max(i + di - 1, 0), h - 1), min(max(j + dj - 1, 0), w - 1)]
                    gx += kx[di][dj] * v
                    gy += kx[dj][di] * v
            out[i, j] = (gx * gx + gy * gy) ** 0.5
    return out


class TestPadFrame:
    def test_full_resolution(self):
        c = pad_frame(np.zeros((480, 640, 3)), 80)
        assert c.shape == (640, 800)
        assert c.mask.sum() == 640 * 480

    def test_zero_pad_is_identity(self, texture):
        c = pad_frame(texture, 0)
        assert np.array_equal(c.image, texture)
        assert c.mask.all()

    def test_small_case(self):
        c = pad_frame(np.full((4, 4, 3), 0.7), 1)
        assert c.shape == (6, 6)
        assert c.mask.sum() == 16
        assert np.all(c.image[0] == 0) and np.all(c.image[:, -1] == 0)

    def test_negative_pad(self):
        with pytest.raises(ValueError):
            pad_frame(np.zeros((2, 2, 3)), -1)

    @given(frames(), st.integers(0, 5))
    def test_crop_inner_roundtrip(self, frame, pad):
        c = pad_frame(frame, pad)
        image, mask = c.crop_inner()
        assert np.array_equal(image, frame)
        assert mask.all()
        assert c.valid_area() == frame.shape[0] * frame.shape[1]
        assert c.shape == (frame.shape[0] + 2 * pad, frame.shape[1] + 2 * pad)


def test_default_pad():
    assert default_pad(640) == 80
    assert default_pad(320) == 40


def test_as_frame_validation():
    with pytest.raises(DimensionMismatch):
        as_frame(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        as_frame(np.full((2, 2, 3), 1.5))


def test_canvas_shape_check():
    with pytest.raises(DimensionMismatch):
        Canvas(np.zeros((3, 3, 3)), np.ones((3, 4), bool), 0)


def test_flow_masking_contract(rng):
    f = FlowField(rng.normal(size=(5, 6, 2)), np.ones((5, 6), bool))
    m = rng.random((5, 6)) < 0.5
    g = f.masked(m)
    assert np.all(g.uv[~m] == 0)
    assert not g.valid[~m].any()
    assert np.array_equal(g.uv[m], f.uv[m])


class TestSobel:
    def test_constant(self):
        assert np.all(sobel_edges(np.full((7, 9, 3), 0.3)) == 0)

    def test_vertical_step(self):
        img = np.zeros((9, 12, 3))
        img[:, 6:] = 1.0
        e = sobel_edges(img)
        # the two columns either side of the step see the full kernel response
        assert np.allclose(e[:, 5], 4.0) and np.allclose(e[:, 6], 4.0)
        assert e[:, 5].max() == e.max()
        assert np.all(e[:, :5] == 0) and np.all(e[:, 7:] == 0)

    def test_random_matches_brute_force(self, rng):
        img = rng.random((8, 8, 3))
        assert np.max(np.abs(sobel_edges(img) - brute_sobel(img))) < 1e-9

    @given(frames(8))
    @settings(max_examples=30)
    def test_nonnegative_same_size(self, frame):
        e = sobel_edges(frame)
        assert e.shape == frame.shape[:2]
        assert np.all(e >= 0)

    def test_luma_weights(self):
        assert luma(np.array([[[1.0, 0.0, 0.0]]]))[0, 0] == pytest.approx(0.299)
        assert luma(np.ones((1, 1, 3)))[0, 0] == pytest.approx(1.0)


class TestSampleBilinear:
    def test_lattice_points_exact(self, rng):
        r = rng.random((5, 7))
        ys, xs = np.mgrid[0:5, 0:7]
        v, ok = sample_bilinear(r, xs.astype(float), ys.astype(float))
        assert np.array_equal(v, r) and ok.all()

    def test_midpoint(self):
        v, ok = sample_bilinear(np.array([[0.0, 1.0]]), np.array([0.5]), np.array([0.0]))
        assert v[0] == 0.5 and ok[0]

    def test_outside(self):
        r = np.ones((4, 4))
        v, ok = sample_bilinear(r, np.array([-1.5, 5.2, 1.0]), np.array([0.0, 0.0, 7.0]))
        assert np.all(v == 0) and not ok.any()

    def test_half_outside_pixel_valid_at_threshold(self):
        # at x = -0.5 half the weight is retained: valid under 0.5, invalid under full support
        r = np.ones((3, 3))
        _, ok = sample_bilinear(r, np.array([-0.5]), np.array([1.0]))
        assert ok[0]
        _, ok = sample_bilinear(r, np.array([-0.5]), np.array([1.0]), min_weight=FULL_SUPPORT)
        assert not ok[0]

    def test_mask_normalised(self):
        r = np.array([[0.2, 0.9]])
        v, ok = sample_bilinear(r, np.array([0.25]), np.array([0.0]),
                                mask=np.array([[True, False]]))
        assert ok[0] and v[0] == pytest.approx(0.2)

    def test_nonfinite_coordinates_invalid(self):
        _, ok = sample_bilinear(np.ones((3, 3)), np.array([np.nan]), np.array([1.0]))
        assert not ok[0]

    @given(arrays(np.float64, (4, 6), elements=st.floats(-5, 5)),
           st.floats(0, 4.99), st.integers(0, 3))
    def test_linear_along_x(self, r, x, y):
        v, ok = sample_bilinear(r, np.array([x]), np.array([float(y)]))
        x0 = int(np.floor(x))
        x1 = min(x0 + 1, 5)
        expect = r[y, x0] * (1 - (x - x0)) + r[y, x1] * (x - x0)
        assert ok[0]
        assert v[0] == pytest.approx(expect, abs=1e-9)

    @given(arrays(np.bool_, (5, 5)), st.floats(-2, 6), st.floats(-2, 6))
    def test_mask_resampling_is_binary(self, m, x, y):
        _, ok = sample_bilinear(m.astype(float), np.array([x]), np.array([y]), mask=m)
        assert ok.dtype == bool

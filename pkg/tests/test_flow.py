import numpy as np
import pytest
from scipy import ndimage

from ovs.core import Canvas, FlowField, pad_frame
from ovs.errors import DimensionMismatch
from ovs.flow import BaselineFlow, FileFlow, estimate_masked_flow, fill_invalid, make_estimator
from ovs.io import flow_filename, write_flo
from ovs.synth import make_panorama


@pytest.fixture(scope="module")
def big():
    return make_panorama(400, 320, seed=5)


@pytest.fixture(scope="module")
def ref(big):
    return big[40:280, 40:360]


def rotated(big, deg, offset=40, size=(320, 240)):
    """Frame whose pixel q shows ``big`` at the crop origin plus R^-1 (q - c) + c."""
    w, h = size
    c = ((w - 1) / 2, (h - 1) / 2)
    X, Y = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    th = np.radians(deg)
    cs, sn = np.cos(th), np.sin(th)
    dx, dy = X - c[0], Y - c[1]
    sx = cs * dx + sn * dy + c[0] + offset
    sy = -sn * dx + cs * dy + c[1] + offset
    out = np.stack([ndimage.map_coordinates(big[..., k], [sy, sx], order=1) for k in range(3)],
                   axis=-1)
    true = np.stack([cs * dx - sn * dy + c[0] - X, sn * dx + cs * dy + c[1] - Y], axis=-1)
    return out, true, (dx, dy)


class ConstantFlow:
    """Adversarial estimator: the same large displacement everywhere."""

    name = "constant"

    def __init__(self, u, v):
        self.uv = (u, v)

    def estimate(self, ref, tgt, pair=None):
        h, w = ref.shape[:2]
        return FlowField(np.broadcast_to(self.uv, (h, w, 2)).copy(), np.ones((h, w), bool))


class TestBaseline:
    def test_identical_inputs(self, ref):
        f = BaselineFlow().estimate(ref, ref)
        assert f.shape == ref.shape[:2]
        assert np.all(f.uv == 0)

    def test_translation(self, big, ref):
        # tgt pixel p shows big at p + (46, 36); ref pixel p matches tgt at p + (6, -4)
        tgt = big[44:284, 34:354]
        f = BaselineFlow().estimate(ref, tgt)
        err = np.hypot(f.uv[..., 0] - 6, f.uv[..., 1] + 4)
        assert (err < 1).mean() >= 0.8

    def test_rotation(self, big, ref):
        tgt, true, (dx, dy) = rotated(big, 3.0)
        f = BaselineFlow().estimate(ref, tgt)
        inner = (np.abs(dx) < 0.4 * 320) & (np.abs(dy) < 0.4 * 240)
        err = np.sum((f.uv - true) ** 2, axis=-1)
        assert np.sqrt(err[inner].mean()) < 1.0

    def test_finite_on_flat_input(self):
        flat = np.full((64, 64, 3), 0.5)
        f = BaselineFlow().estimate(flat, flat)
        assert np.all(np.isfinite(f.uv))

    def test_size_mismatch(self, ref):
        with pytest.raises(DimensionMismatch):
            BaselineFlow().estimate(ref, ref[:-2])


class TestMaskedFlow:
    def test_identical_canvases(self, ref):
        c = pad_frame(ref, 40)
        f = estimate_masked_flow(BaselineFlow(), c, c)
        m = c.mask
        assert np.percentile(np.abs(f.uv[m]), 90, axis=0).max() < 0.3

    def test_translation_inside_shared_support(self, big, ref):
        c = pad_frame(ref, 40)
        tgt = big[38:278, 37:357]  # ref pixel p matches tgt at p + (3, 2)
        aligned = pad_frame(tgt, 40)
        f = estimate_masked_flow(BaselineFlow(), c, aligned)
        med = np.median(f.uv[c.mask], axis=0)
        assert np.allclose(med, [3.0, 2.0], atol=0.5)

    def test_masking_contract(self, ref, rng):
        c = pad_frame(ref, 20)
        aligned = pad_frame(np.clip(ref + rng.normal(0, 0.02, ref.shape), 0, 1), 20)
        for est in (BaselineFlow(), ConstantFlow(7.5, -3.0)):
            f = estimate_masked_flow(est, c, aligned)
            assert not f.valid[~c.mask].any()
            assert np.all(f.uv[~c.mask] == 0)
            assert f.valid[c.mask].all()

    def test_dimension_mismatch(self, ref):
        with pytest.raises(DimensionMismatch):
            estimate_masked_flow(BaselineFlow(), pad_frame(ref, 2), pad_frame(ref, 3))

    def test_fill_invalid_nearest(self):
        img = np.zeros((3, 5, 3))
        img[:, 2] = 0.8
        mask = np.zeros((3, 5), bool)
        mask[:, 2] = True
        out = fill_invalid(Canvas(img, mask, 0))
        assert np.all(out == 0.8)


class TestFileFlow:
    def test_reads_named_file(self, tmp_path, rng):
        uv = rng.normal(size=(10, 12, 2)).astype(np.float32)
        write_flo(tmp_path / flow_filename(1, 2), uv)
        est = make_estimator(f"files:{tmp_path}")
        f = est.estimate(np.zeros((10, 12, 3)), np.zeros((10, 12, 3)), pair=(1, 2))
        assert np.array_equal(f.uv, uv.astype(np.float64))

    def test_frame_sized_file_is_centred(self, tmp_path):
        uv = np.ones((4, 6, 2), np.float32)
        write_flo(tmp_path / flow_filename(0, 1), uv)
        f = FileFlow(tmp_path).estimate(np.zeros((8, 10, 3)), None, pair=(0, 1))
        assert f.uv[2:6, 2:8].min() == 1 and f.uv.sum() == 48

    def test_needs_pair(self, tmp_path):
        with pytest.raises(ValueError):
            FileFlow(tmp_path).estimate(np.zeros((2, 2, 3)), None)

    def test_unknown_spec(self):
        with pytest.raises(ValueError):
            make_estimator("raft")

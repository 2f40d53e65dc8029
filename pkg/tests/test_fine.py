import numpy as np
import pytest

from ovs.ablate import band_mask
from ovs.core import Canvas, FlowField, pad_frame
from ovs.errors import DimensionMismatch
from ovs.fine import apply_refinement, fine_align, refine_flow
from ovs.flow import BaselineFlow
from ovs.metrics import psnr
from ovs.synth import make_panorama

PAD = 40
W, H = 240, 180


@pytest.fixture(scope="module")
def world():
    return make_panorama(420, 340, seed=11)


def view(world, shift=(0.0, 0.0), extend=0):
    """Canvas whose pixel q shows world at q - shift - PAD + (90, 80).

    The valid region is the inner frame grown by ``extend`` px on every side.
    """
    hh, ww = H + 2 * PAD, W + 2 * PAD
    x0 = 90 - PAD - int(shift[0])
    y0 = 80 - PAD - int(shift[1])
    image = world[y0:y0 + hh, x0:x0 + ww].copy()
    mask = np.zeros((hh, ww), bool)
    e = extend
    mask[PAD - e:PAD + H + e, PAD - e:PAD + W + e] = True
    image[~mask] = 0
    return Canvas(image, mask, PAD)


class ConstantFlow:
    name = "constant"

    def estimate(self, ref, tgt, pair=None):
        h, w = ref.shape[:2]
        return FlowField(np.broadcast_to([23.0, -17.0], (h, w, 2)).copy(), np.ones((h, w), bool))


def test_perfect_alignment_is_fixed_point(world):
    ref = view(world)
    aligned = view(world, extend=30)
    res = fine_align(ref, aligned, BaselineFlow())
    assert res.ok
    shared = res.shared
    assert shared.sum() > 0.9 * W * H
    assert psnr(res.canvas.image, ref.image, shared & res.canvas.mask) >= 40


def test_residual_translation_band(world):
    ref = view(world)
    aligned = view(world, shift=(2, 0), extend=30)  # aligned q shows ref content at q - (2, 0)
    res = refine_flow(ref, aligned, BaselineFlow())
    assert res.ok
    band = band_mask(Canvas(ref.image, np.ones(ref.shape, bool), PAD))  # 40-px outer band
    err = np.hypot(res.flow.uv[..., 0] + 2, res.flow.uv[..., 1])
    assert (err[band] < 1).mean() >= 0.9
    # the refined canvas lines up with the truth on what it covers
    refined = apply_refinement(aligned, res.flow)
    truth = view(world, extend=PAD)
    m = refined.mask & band
    assert m.sum() > 0 and psnr(refined.image, truth.image, m) > 30


def test_empty_shared_view_passthrough(world):
    ref = view(world)
    aligned = Canvas(np.zeros(ref.image.shape), np.zeros(ref.shape, bool), PAD)
    res = fine_align(ref, aligned, BaselineFlow())
    assert not res.ok
    assert res.canvas is aligned
    assert np.all(res.flow.uv == 0)


def test_adversarial_estimator_stays_valid(world):
    ref = view(world)
    aligned = view(world, shift=(3, 1), extend=20)
    res = fine_align(ref, aligned, ConstantFlow())
    c = res.canvas
    assert np.all(np.isfinite(c.image)) and np.all(np.isfinite(res.flow.uv))
    assert c.mask.dtype == bool
    assert np.all(c.image[~c.mask] == 0)


def test_dimension_mismatch(world):
    with pytest.raises(DimensionMismatch):
        fine_align(view(world), pad_frame(np.zeros((H, W, 3)), PAD + 1), BaselineFlow())

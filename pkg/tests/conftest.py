import numpy as np
import pytest

from ovs.synth import make_panorama

_CRITERIA = {}


def record_criterion(number, passed, detail=""):
    """Print and remember one acceptance line; the summary repeats them in order."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
    _CRITERIA[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def texture():
    """A 240x320 textured frame, trackable by corners and block matching."""
    return make_panorama(320, 240, seed=3)


def shift_image(img, dx, dy):
    """Content moved by (dx, dy): out[y, x] = img[y - dy, x - dx], edges replicated."""
    h, w = img.shape[:2]
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return img[ys][:, xs]

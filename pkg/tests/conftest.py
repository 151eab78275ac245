import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from depthdeblur import DepthMap, Intrinsics, Pose6  # noqa: E402

ACCEPTANCE_LINES: dict[int, str] = {}


def random_scene(rng, h=32, w=32, channels=3):
    """Random image over a random smooth positive depth map."""
    img = rng.uniform(0, 1, (h, w, channels))
    v, u = np.mgrid[0:h, 0:w] / max(h, w)
    a, b, c = rng.uniform(-0.5, 0.5, 3)
    depth = 2.0 + a * u + b * v + c * u * v
    return img, DepthMap(depth), Intrinsics.default_for(h, w)


def random_pose(rng, rot=0.05, trans=0.05):
    return Pose6(tuple(rng.normal(0, rot, 3)), tuple(rng.normal(0, trans, 3)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])

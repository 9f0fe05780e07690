import sys
import numpy as np
import pytest

from pnpf.correspondences import CorrespondenceSet
from pnpf.geometry import PinholeCamera, RigidPose, project_points, random_rotation


def random_scene(rng, n=50, f=None, depth=(2.0, 20.0), spread=1.0, image_size=(640, 480)):
    """Random points around a random pose, with exact projections."""
    f = float(np.exp(rng.uniform(np.log(300), np.log(3000)))) if f is None else f
    R = random_rotation(rng)
    t = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.0]) * rng.uniform(*depth)
    X = rng.uniform(-spread, spread, size=(n, 3))
    pose = RigidPose(R, t)
    cam = PinholeCamera(f, image_size)
    Xc = X @ R.T + t
    if np.any(Xc[:, 2] < 0.2):
        return random_scene(rng, n, f, depth, spread, image_size)
    return CorrespondenceSet(X, project_points(X, pose, cam)), pose, cam


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

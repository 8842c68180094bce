import numpy as np
import pytest

from nerp.camera import Camera, Pose
from nerp.phantoms import homogeneous, random_smooth


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def slab_phantom():
    # 100 mm cube, gamma 0.01/mm, mu 1
    return homogeneous((20, 20, 20), 5.0, mu=1.0, gamma=0.01)


@pytest.fixture(scope="session")
def smooth_phantom():
    return random_smooth(np.random.default_rng(7), dims=12, spacing=5.0, blobs=4)


@pytest.fixture
def axis_camera():
    """Looks along +x from x = -500 at the world origin."""
    return Camera(Pose.look_at((0.0, 0.0, -500.0), (0.0, 0.0, 0.0)), fov=20.0, image_size=(33, 33))


def random_rays_through(bounds, rng, count, spread=1.5):
    """Rays from a shell around ``bounds`` aimed at random interior points."""
    from nerp.camera import Ray

    rays = []
    c = bounds.center
    r = 0.5 * np.linalg.norm(bounds.size)
    for _ in range(count):
        v = rng.normal(size=3)
        origin = c + spread * r * v / np.linalg.norm(v)
        aim = bounds.lo + rng.uniform(size=3) * bounds.size
        d = aim - origin
        rays.append((origin, d / np.linalg.norm(d)))
    return rays


# filled by test_acceptance.verdict, printed once at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

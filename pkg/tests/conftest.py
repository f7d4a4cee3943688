import numpy as np
import pytest

from viewplan.geometry import Intrinsics, Pose, Scene, VisibilitySet
from viewplan.sampling import CandidatePool, SamplerParams


def quad(z, half=1.0):
    """Fronto-parallel square at depth z facing a camera at the origin."""
    h = half
    return np.array(
        [
            [[-h, -h, z], [h, -h, z], [h, h, z]],
            [[-h, -h, z], [h, h, z], [-h, h, z]],
        ],
        dtype=float,
    )


def random_instance(rng, n_cand, n_vox, max_size=None, min_size=1):
    """Random visibility sets over a small voxel universe, as VisibilitySets."""
    max_size = min(max_size or n_vox, n_vox)
    sets = []
    for _ in range(n_cand):
        k = int(rng.integers(min_size, max_size + 1))
        ids = rng.choice(n_vox, size=k, replace=False)
        sets.append(VisibilitySet(np.stack([ids, np.zeros(k, int), np.zeros(k, int)], axis=1)))
    return sets


def fake_pool(n, poses=None, provenance=None):
    poses = poses or [Pose((float(i), 0.0, 0.0)) for i in range(n)]
    provenance = provenance or ["random"] * n
    return CandidatePool("fake", 0, SamplerParams(pool_size=n), list(poses), list(provenance), [0] * n)


@pytest.fixture
def small_K():
    return Intrinsics(fx=50.0, fy=50.0, cx=32.0, cy=24.0, width=64, height=48)


@pytest.fixture
def wall_scene():
    return Scene(quad(2.0), "wall")


ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])

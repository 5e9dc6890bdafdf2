import numpy as np
import pytest
from scipy.spatial import ConvexHull

from riccicov.mesh import TriangleMesh
from riccicov.synth import SynthSpec, _triangulate, disk_samples, generate

SQRT3 = np.sqrt(3.0)

# criterion name -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def equilateral():
    return TriangleMesh.from_arrays([[0, 0, 0], [1, 0, 0], [0.5, SQRT3 / 2, 0]], [[0, 1, 2]])


def right_345():
    return TriangleMesh.from_arrays([[0, 0, 0], [3, 0, 0], [0, 4, 0]], [[0, 1, 2]])


def hex_fan():
    ring = [[np.cos(k * np.pi / 3), np.sin(k * np.pi / 3), 0.0] for k in range(6)]
    faces = [[0, 1 + k, 1 + (k + 1) % 6] for k in range(6)]
    return TriangleMesh.from_arrays([[0, 0, 0]] + ring, faces)


def two_equilateral():
    """Two unit equilateral faces sharing the edge (0, 1)."""
    v = [[0, 0, 0], [1, 0, 0], [0.5, SQRT3 / 2, 0], [0.5, -SQRT3 / 2, 0]]
    return TriangleMesh.from_arrays(v, [[0, 1, 2], [1, 0, 3]])


def icosahedron():
    phi = (1 + np.sqrt(5)) / 2
    v = []
    for a in (-1, 1):
        for b in (-phi, phi):
            v += [[0, a, b], [a, b, 0], [b, 0, a]]
    v = np.array(v, dtype=float)
    faces = ConvexHull(v).simplices
    for f in faces:
        a, b, c = v[f]
        if np.dot(np.cross(b - a, c - a), a + b + c) < 0:
            f[[1, 2]] = f[[2, 1]]
    return TriangleMesh.from_arrays(v, faces)


def flat_disk(resolution=200, seed=0):
    uv, _ = disk_samples(resolution, np.random.default_rng(seed), 0.25)
    return TriangleMesh.from_arrays(np.column_stack([uv, np.zeros(len(uv))]), _triangulate(uv))


def random_patch(n, seed):
    """Random bumpy cap with about ``n`` vertices."""
    rng = np.random.default_rng(seed)
    return generate(
        SynthSpec(
            bump_count=int(rng.integers(0, 4)),
            bump_amplitude=float(rng.uniform(0.0, 0.15)),
            resolution=n,
            seed=seed,
            cap_angle=float(rng.uniform(0.4, 1.0)),
        )
    )


@pytest.fixture(scope="session")
def sphere_cap():
    return generate(SynthSpec(resolution=500, seed=7))


@pytest.fixture(scope="session")
def bumpy_cap():
    return generate(SynthSpec(bump_count=3, bump_amplitude=0.15, resolution=500, seed=11))

"""Synthetic two-class cap datasets and Gaussian vertex noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .mesh import MeshError, TriangleMesh, corner_angles, euclidean_edge_metric


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic patch.

    Bump amplitude and radius are fractions of the patch radius (the chord
    radius of the cap boundary).
    """

    label: int = 0
    base: str = "sphere-cap"
    bump_count: int = 0
    bump_amplitude: float = 0.15
    bump_radius: float = 0.2
    resolution: int = 500
    seed: int = 0
    cap_angle: float = 0.8  # polar half-angle of the cap, radians
    jitter: float = 0.25  # interior sample jitter, fraction of ring spacing
    ellipsoid_axes: tuple = (1.0, 0.8, 0.7)

    def __post_init__(self):
        if self.bump_amplitude < 0 or self.bump_radius <= 0:
            raise ValueError("bump amplitude must be >= 0 and bump radius > 0")
        if self.resolution < 50:
            raise ValueError("resolution must be at least 50")
        if self.base not in ("sphere-cap", "ellipsoid-cap"):
            raise ValueError(f"unknown base shape {self.base!r}")
        if not 0 < self.cap_angle < np.pi:
            raise ValueError("cap_angle must lie in (0, pi)")


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.1
    relative: bool = True  # sigma is a fraction of the mean edge length
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def _ring_count(resolution: int) -> int:
    # a hexagonal disk with R rings has 1 + 3R(R+1) vertices
    best = min(range(1, 200), key=lambda r: abs(1 + 3 * r * (r + 1) - resolution))
    return best


def disk_samples(resolution: int, rng: np.random.Generator, jitter: float) -> tuple:
    """Concentric-ring samples of the unit disk; returns (points, n_boundary)."""
    rings = _ring_count(resolution)
    pts = [np.zeros((1, 2))]
    for r in range(1, rings + 1):
        count = 6 * r
        phase = rng.uniform(0, 2 * np.pi)
        theta = phase + 2 * np.pi * np.arange(count) / count
        rho = np.full(count, r / rings)
        if r < rings:
            rho = rho + rng.uniform(-jitter, jitter, count) / rings
            theta = theta + rng.uniform(-jitter, jitter, count) * (2 * np.pi / count)
        pts.append(np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=1))
    return np.concatenate(pts), 6 * rings


def _triangulate(uv: np.ndarray) -> np.ndarray:
    tri = Delaunay(uv).simplices.astype(np.int64)
    a, b, c = uv[tri[:, 0]], uv[tri[:, 1]], uv[tri[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    tri[cross < 0] = tri[cross < 0][:, [0, 2, 1]]
    # drop slivers Delaunay may create between nearly collinear hull points
    keep = np.abs(cross) > 1e-12
    return tri[keep]


def _lift(uv: np.ndarray, spec: SynthSpec) -> tuple:
    rho = np.linalg.norm(uv, axis=1)
    phi = np.arctan2(uv[:, 1], uv[:, 0])
    polar = rho * spec.cap_angle
    unit = np.stack(
        [np.sin(polar) * np.cos(phi), np.sin(polar) * np.sin(phi), np.cos(polar)], axis=1
    )
    if spec.base == "sphere-cap":
        return unit, unit.copy()
    axes = np.asarray(spec.ellipsoid_axes, dtype=np.float64)
    pos = unit * axes
    normal = unit / axes
    return pos, normal / np.linalg.norm(normal, axis=1, keepdims=True)


def generate(spec: SynthSpec) -> TriangleMesh:
    """Triangulated cap; class-1 style patches get Gaussian bumps along the normal."""
    rng = np.random.default_rng(spec.seed)
    uv, _ = disk_samples(spec.resolution, rng, spec.jitter)
    faces = _triangulate(uv)
    pos, normal = _lift(uv, spec)
    patch_radius = float(np.sin(spec.cap_angle))
    centers = rng.uniform(-1.0, 1.0, size=(max(spec.bump_count, 0) * 8, 2))
    centers = centers[np.linalg.norm(centers, axis=1) < 0.6][: spec.bump_count]
    heights = np.zeros(len(uv))
    if spec.bump_amplitude > 0:
        for c in centers:
            pc, _ = _lift(c[None, :], spec)
            d2 = np.sum((pos - pc) ** 2, axis=1)
            width = spec.bump_radius * patch_radius
            heights += spec.bump_amplitude * patch_radius * np.exp(-d2 / (2 * width**2))
    pos = pos + heights[:, None] * normal
    return TriangleMesh.from_arrays(pos, faces)


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted unit vertex normals."""
    v = mesh.vertices
    f = mesh.faces
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])  # |fn| = 2 * area
    n = np.zeros_like(v)
    for c in range(3):
        np.add.at(n, f[:, c], fn)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def noise_displacements(mesh: TriangleMesh, spec: NoiseSpec) -> np.ndarray:
    """Signed normal offsets drawn from N(0, sigma^2) in model units."""
    sigma = spec.sigma
    if spec.relative:
        sigma *= float(euclidean_edge_metric(mesh).mean())
    rng = np.random.default_rng(spec.seed)
    return rng.normal(0.0, sigma, size=mesh.n_vertices)


def add_noise(mesh: TriangleMesh, spec: NoiseSpec) -> TriangleMesh:
    if spec.sigma == 0:
        return mesh
    offsets = noise_displacements(mesh, spec)
    noisy = mesh.with_vertices(mesh.vertices + offsets[:, None] * vertex_normals(mesh))
    try:
        corner_angles(noisy, euclidean_edge_metric(noisy))
    except MeshError as exc:
        raise MeshError(f"noise produced an invalid mesh ({exc}); use a smaller sigma") from None
    return noisy

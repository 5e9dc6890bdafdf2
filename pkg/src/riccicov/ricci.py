"""Inversive-distance circle packing and Newton optimisation of the Ricci energy.

The conformal factor ``u`` is measured relative to the initial packing, so
radii at any stage are ``gamma0 * exp(u)`` and ``u = 0`` is the input metric.
Newton steps are projected onto ``sum(u) = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import spsolve

from .mesh import (
    TWO_PI,
    TriangleInequalityError,
    TriangleMesh,
    corner_angles,
    edge_laplacian,
    face_lengths,
    gaussian_curvature,
)

logger = logging.getLogger(__name__)

ETA_FLOOR = -0.999999


class PackingError(ValueError):
    """Raised for invalid circle packings or inadmissible targets."""


@dataclass(frozen=True)
class CirclePackingMetric:
    radii: np.ndarray
    eta: np.ndarray
    background: str = "Euclidean"

    @property
    def u(self) -> np.ndarray:
        return np.log(self.radii)

    def scaled(self, u: np.ndarray) -> "CirclePackingMetric":
        """Packing with radii ``radii * exp(u)`` and the same inversive distances."""
        return CirclePackingMetric(self.radii * np.exp(u), self.eta, self.background)


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-6
    max_iterations: int = 200
    damping_min: float = 1e-8
    boundary_target_mode: str = "uniform"
    # upper bound on the Newton step fraction; values < 1 slow the flow down and
    # produce more recorded stages
    max_step: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if not 0 < self.damping_min < 1:
            raise ValueError("damping_min must lie in (0, 1)")
        if not 0 < self.max_step <= 1:
            raise ValueError("max_step must lie in (0, 1]")
        if self.boundary_target_mode not in ("uniform",):
            raise ValueError(f"unknown boundary_target_mode {self.boundary_target_mode!r}")


@dataclass(frozen=True)
class Stage:
    iteration: int
    u: np.ndarray
    lengths: np.ndarray
    curvature: np.ndarray
    residual: float


@dataclass
class RicciTrace:
    """Snapshots of every accepted Newton iterate, stage 0 being the input."""

    packing: CirclePackingMetric
    target: np.ndarray
    stages: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False

    @property
    def iterations(self) -> int:
        return len(self.stages) - 1

    @property
    def final(self) -> Stage:
        return self.stages[-1]

    @property
    def residuals(self) -> np.ndarray:
        return np.array([s.residual for s in self.stages])

    def radii(self, stage: int) -> np.ndarray:
        return self.packing.radii * np.exp(self.stages[stage].u)

    def save(self, path) -> None:
        np.savez(
            path,
            radii=self.packing.radii,
            eta=self.packing.eta,
            target=self.target,
            iteration=np.array([s.iteration for s in self.stages]),
            u=np.stack([s.u for s in self.stages]),
            lengths=np.stack([s.lengths for s in self.stages]),
            curvature=np.stack([s.curvature for s in self.stages]),
            residual=self.residuals,
            converged=np.array(self.converged),
            stalled=np.array(self.stalled),
        )

    @classmethod
    def load(cls, path) -> "RicciTrace":
        with np.load(Path(path)) as z:
            stages = [
                Stage(int(it), u.copy(), l.copy(), k.copy(), float(r))
                for it, u, l, k, r in zip(
                    z["iteration"], z["u"], z["lengths"], z["curvature"], z["residual"]
                )
            ]
            return cls(
                packing=CirclePackingMetric(z["radii"].copy(), z["eta"].copy()),
                target=z["target"].copy(),
                stages=stages,
                converged=bool(z["converged"]),
                stalled=bool(z["stalled"]),
            )


# ---------------------------------------------------------------------------
# packing


def corner_tangent_radii(mesh: TriangleMesh, lengths: np.ndarray) -> np.ndarray:
    """``(l_ij + l_ki - l_jk) / 2`` for every corner, shape ``(n_faces, 3)``."""
    L = face_lengths(mesh, lengths)
    return 0.5 * (np.roll(L, -1, axis=1) + np.roll(L, -2, axis=1) - L)


def init_circle_packing(mesh: TriangleMesh, lengths: np.ndarray) -> CirclePackingMetric:
    corner = corner_tangent_radii(mesh, lengths)
    radii = np.full(mesh.n_vertices, np.inf)
    np.minimum.at(radii, mesh.faces.ravel(), corner.ravel())
    if not np.all(radii > 0):
        v = int(np.flatnonzero(~(radii > 0))[0])
        raise PackingError(f"non-positive radius {radii[v]:.3g} at vertex {v} (degenerate face)")
    gi = radii[mesh.edges[:, 0]]
    gj = radii[mesh.edges[:, 1]]
    eta = (lengths**2 - gi**2 - gj**2) / (2.0 * gi * gj)
    clamped = eta < ETA_FLOOR
    if clamped.any():
        logger.warning("clamped %d inversive distances to %g", int(clamped.sum()), ETA_FLOOR)
        eta = np.maximum(eta, ETA_FLOOR)
    return CirclePackingMetric(radii, eta)


def _squared_lengths(mesh: TriangleMesh, radii: np.ndarray, eta: np.ndarray) -> np.ndarray:
    gi = radii[mesh.edges[:, 0]]
    gj = radii[mesh.edges[:, 1]]
    return gi * gi + gj * gj + 2.0 * gi * gj * eta


def packing_edge_lengths(mesh: TriangleMesh, packing: CirclePackingMetric) -> np.ndarray:
    sq = _squared_lengths(mesh, packing.radii, packing.eta)
    if not np.all(sq > 0):
        e = int(np.flatnonzero(~(sq > 0))[0])
        raise TriangleInequalityError(
            f"squared length {sq[e]:.3g} of edge {e} is not positive",
            mesh.edge_faces[e][mesh.edge_faces[e] >= 0],
        )
    lengths = np.sqrt(sq)
    corner_angles(mesh, lengths)  # validates every face
    return lengths


def face_layouts(mesh: TriangleMesh, packing: CirclePackingMetric, lengths: np.ndarray | None = None):
    """Local planar layout of every face and its power centre.

    Returns ``(points, centers)`` with ``points`` of shape ``(n_faces, 3, 2)``
    (corner 0 at the origin, corner 1 on the positive x axis) and ``centers``
    of shape ``(n_faces, 2)``.
    """
    if lengths is None:
        lengths = packing_edge_lengths(mesh, packing)
    L = face_lengths(mesh, lengths)
    g = packing.radii[mesh.faces]
    l01, l02 = L[:, 2], L[:, 1]
    cos0 = (l01**2 + l02**2 - L[:, 0] ** 2) / (2.0 * l01 * l02)
    sin0 = np.sqrt(np.clip(1.0 - cos0**2, 0.0, None))
    pts = np.zeros((mesh.n_faces, 3, 2))
    pts[:, 1, 0] = l01
    pts[:, 2, 0] = l02 * cos0
    pts[:, 2, 1] = l02 * sin0
    if np.any(pts[:, 2, 1] <= 0):
        f = int(np.flatnonzero(pts[:, 2, 1] <= 0)[0])
        raise TriangleInequalityError(f"degenerate layout at face {f}", [f])
    # equal power |o - p|^2 - g^2 for the three circles, with p0 = 0
    ox = (l01**2 - g[:, 1] ** 2 + g[:, 0] ** 2) / (2.0 * l01)
    oy = (l02**2 - g[:, 2] ** 2 + g[:, 0] ** 2 - 2.0 * ox * pts[:, 2, 0]) / (2.0 * pts[:, 2, 1])
    return pts, np.stack([ox, oy], axis=1)


def power_heights(
    mesh: TriangleMesh, packing: CirclePackingMetric, lengths: np.ndarray | None = None
) -> np.ndarray:
    """Signed distances from each face's power centre to its edges.

    Column ``c`` holds the distance to the edge opposite corner ``c``,
    positive towards the face interior.
    """
    pts, o = face_layouts(mesh, packing, lengths)
    h = np.empty((mesh.n_faces, 3))
    for c in range(3):
        a, b = pts[:, (c + 1) % 3], pts[:, (c + 2) % 3]
        ab = b - a
        ao = o - a
        h[:, c] = (ab[:, 0] * ao[:, 1] - ab[:, 1] * ao[:, 0]) / np.linalg.norm(ab, axis=1)
    return h


def edge_weights(mesh: TriangleMesh, heights: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """``(h_ij^k + h_ji^l) / l_ij``; boundary edges take their single term."""
    acc = np.bincount(mesh.face_edges.ravel(), weights=heights.ravel(), minlength=mesh.n_edges)
    return acc / lengths


def ricci_hessian(mesh: TriangleMesh, weights: np.ndarray):
    return edge_laplacian(mesh, weights)


# ---------------------------------------------------------------------------
# optimisation


def curvature_at(mesh: TriangleMesh, packing: CirclePackingMetric, u: np.ndarray):
    """Lengths and curvature of the packing scaled by ``exp(u)``."""
    lengths = packing_edge_lengths(mesh, packing.scaled(u))
    return lengths, gaussian_curvature(mesh, corner_angles(mesh, lengths))


def flat_target(mesh: TriangleMesh, mode: str = "uniform") -> np.ndarray:
    """Zero curvature inside, ``2*pi*chi / |boundary|`` on every boundary vertex."""
    if mode != "uniform":
        raise ValueError(f"unknown boundary target mode {mode!r}")
    target = np.zeros(mesh.n_vertices)
    nb = int(mesh.boundary_vertex.sum())
    if nb == 0:
        raise PackingError("flat target needs a boundary")
    target[mesh.boundary_vertex] = TWO_PI * mesh.euler_characteristic / nb
    return target


def check_target(mesh: TriangleMesh, target: np.ndarray) -> None:
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (mesh.n_vertices,):
        raise PackingError(f"target has shape {target.shape}, expected ({mesh.n_vertices},)")
    expected = TWO_PI * mesh.euler_characteristic
    if abs(target.sum() - expected) > 1e-9:
        raise PackingError(
            f"target curvature sums to {target.sum():.12g}, Gauss-Bonnet requires {expected:.12g}"
        )


def solve_projected(H, rhs: np.ndarray) -> np.ndarray:
    """Solve ``H x = rhs`` on the zero-mean subspace (``H`` has constant kernel)."""
    rhs = rhs - rhs.mean()
    reduced = H[1:, 1:].tocsc()
    x = np.zeros_like(rhs)
    x[1:] = spsolve(reduced, rhs[1:])
    return x - x.mean()


def newton_direction(mesh: TriangleMesh, packing: CirclePackingMetric, u, lengths, residual_vec):
    scaled = packing.scaled(u)
    h = power_heights(mesh, scaled, lengths)
    H = ricci_hessian(mesh, edge_weights(mesh, h, lengths))
    return solve_projected(H, residual_vec)


def optimize(
    mesh: TriangleMesh,
    target: np.ndarray,
    cfg: SolverConfig | None = None,
    packing: CirclePackingMetric | None = None,
    lengths: np.ndarray | None = None,
) -> RicciTrace:
    """Drive the packing's curvature to ``target`` by damped Newton steps."""
    cfg = cfg or SolverConfig()
    target = np.asarray(target, dtype=np.float64)
    check_target(mesh, target)
    if packing is None:
        from .mesh import euclidean_edge_metric

        packing = init_circle_packing(mesh, euclidean_edge_metric(mesh) if lengths is None else lengths)

    u = np.zeros(mesh.n_vertices)
    lengths, K = curvature_at(mesh, packing, u)
    residual = float(np.max(np.abs(target - K)))
    trace = RicciTrace(packing=packing, target=target)
    trace.stages.append(Stage(0, u, lengths, K, residual))

    it = 0
    while residual >= cfg.epsilon and it < cfg.max_iterations:
        du = newton_direction(mesh, packing, u, lengths, target - K)
        lam = cfg.max_step
        while True:
            cand = u + lam * du
            cand -= cand.mean()
            try:
                cand_lengths, cand_K = curvature_at(mesh, packing, cand)
            except TriangleInequalityError:
                cand_K = None
            if cand_K is not None:
                cand_res = float(np.max(np.abs(target - cand_K)))
                if cand_res <= residual:
                    break
            lam *= 0.5
            if lam < cfg.damping_min:
                break
        if lam < cfg.damping_min:
            logger.warning("Newton iteration %d stalled (residual %.3e)", it + 1, residual)
            trace.stalled = True
            break
        it += 1
        prev = residual
        u, lengths, K, residual = cand, cand_lengths, cand_K, cand_res
        trace.stages.append(Stage(it, u, lengths, K, residual))
        if prev > 0:
            logger.debug(
                "iter %d: residual %.3e, step %.3g, quadratic ratio %.3g",
                it, residual, lam, residual / prev**2,
            )

    trace.converged = residual < cfg.epsilon
    if not trace.converged and not trace.stalled:
        logger.warning(
            "Ricci flow did not converge in %d iterations (residual %.3e)",
            cfg.max_iterations, residual,
        )
    return trace

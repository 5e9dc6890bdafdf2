"""Breadth-first isometric layout of a flat metric in the plane."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .mesh import MeshError, TriangleMesh, corner_angles, face_lengths, gaussian_curvature


EMBED_EPSILON = 1e-10


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class PlanarEmbedding:
    positions: np.ndarray  # (n_vertices, 2)
    seed_face: int
    consistency_residual: float = 0.0

    def signed_areas(self, mesh: TriangleMesh) -> np.ndarray:
        p = self.positions[mesh.faces]
        a, b, c = p[:, 0], p[:, 1], p[:, 2]
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def edge_lengths(self, mesh: TriangleMesh) -> np.ndarray:
        p = self.positions
        return np.linalg.norm(p[mesh.edges[:, 0]] - p[mesh.edges[:, 1]], axis=1)


def _auto_seed(mesh: TriangleMesh, lengths) -> int:
    return int(np.argmax(corner_angles(mesh, lengths).min(axis=1)))


def _intersect(pi, pj, ri, rj, tol):
    """Point at distances ``ri`` from ``pi`` and ``rj`` from ``pj``, left of ``pi -> pj``."""
    d_vec = pj - pi
    d = float(np.hypot(*d_vec))
    a = (ri * ri - rj * rj + d * d) / (2.0 * d)
    h2 = ri * ri - a * a
    if h2 < 0:
        if h2 < -tol * ri * ri:
            raise EmbeddingError(
                f"circles do not intersect (radii {ri:.6g}, {rj:.6g}, centre distance {d:.6g})"
            )
        h2 = 0.0
    e = d_vec / d
    perp = np.array([-e[1], e[0]])
    return pi + a * e + np.sqrt(h2) * perp


def embed_plane(mesh: TriangleMesh, lengths: np.ndarray, seed="auto", flat_tol: float = 1e-4) -> PlanarEmbedding:
    if not mesh.is_disk():
        raise EmbeddingError(
            f"planar embedding needs a topological disk (chi = {mesh.euler_characteristic}, "
            f"{len(mesh.boundary_loops())} boundary loops)"
        )
    try:
        K = gaussian_curvature(mesh, corner_angles(mesh, lengths))
    except MeshError as exc:
        raise EmbeddingError(str(exc)) from exc
    interior = ~mesh.boundary_vertex
    if interior.any() and np.abs(K[interior]).max() >= flat_tol:
        v = int(np.flatnonzero(interior)[np.argmax(np.abs(K[interior]))])
        raise EmbeddingError(f"metric is not flat: |K| = {abs(K[v]):.3g} at interior vertex {v}")

    seed = _auto_seed(mesh, lengths) if seed == "auto" else int(seed)
    L = face_lengths(mesh, lengths)
    theta = corner_angles(mesh, lengths)
    pos = np.full((mesh.n_vertices, 2), np.nan)
    placed = np.zeros(mesh.n_vertices, dtype=bool)

    v0, v1, v2 = mesh.faces[seed]
    pos[v0] = (0.0, 0.0)
    pos[v1] = (L[seed, 2], 0.0)
    pos[v2] = L[seed, 1] * np.array([np.cos(theta[seed, 0]), np.sin(theta[seed, 0])])
    placed[[v0, v1, v2]] = True

    neighbors = mesh.face_neighbors()
    visited = np.zeros(mesh.n_faces, dtype=bool)
    visited[seed] = True
    queue = deque()
    for g in neighbors[seed]:
        visited[g] = True
        queue.append(g)

    residual = 0.0
    while queue:
        f = queue.popleft()
        tri = mesh.faces[f]
        have = placed[tri]
        if have.all():
            # all three corners fixed already: measure how well the lengths agree
            for c in range(3):
                a, b = tri[(c + 1) % 3], tri[(c + 2) % 3]
                err = abs(np.hypot(*(pos[a] - pos[b])) - L[f, c]) / L[f, c]
                residual = max(residual, err)
        else:
            # rotate so the missing corner is last: (i, j) placed, k new
            c = int(np.flatnonzero(~have)[0])
            i, j, k = tri[(c + 1) % 3], tri[(c + 2) % 3], tri[c]
            l_ik = L[f, (c + 2) % 3]
            l_jk = L[f, (c + 1) % 3]
            pos[k] = _intersect(pos[i], pos[j], l_ik, l_jk, 1e-6)
            placed[k] = True
        for g in neighbors[f]:
            if not visited[g]:
                visited[g] = True
                queue.append(g)

    if not placed.all():
        raise EmbeddingError("some vertices could not be reached from the seed face")
    return PlanarEmbedding(pos, seed, residual)


def flatten(mesh: TriangleMesh, solver=None, seed="auto"):
    """Flow ``mesh`` to the flat target and lay it out; returns ``(trace, embedding)``.

    Layout error grows with the curvature left over by the flow, so the solver
    tolerance is tightened to ``EMBED_EPSILON`` first.
    """
    from .ricci import SolverConfig, flat_target, optimize

    solver = solver or SolverConfig()
    solver = replace(solver, epsilon=min(solver.epsilon, EMBED_EPSILON))
    trace = optimize(mesh, flat_target(mesh, solver.boundary_target_mode), solver)
    if not trace.converged:
        raise EmbeddingError(f"flow did not converge (residual {trace.final.residual:.3e})")
    return trace, embed_plane(mesh, trace.final.lengths, seed=seed)


def procrustes_rms(a: np.ndarray, b: np.ndarray) -> float:
    """RMS distance after the best rotation and translation taking ``b`` onto ``a``."""
    ca, cb = a - a.mean(axis=0), b - b.mean(axis=0)
    U, _, Vt = np.linalg.svd(cb.T @ ca)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return float(np.sqrt(np.mean(np.sum((cb @ R - ca) ** 2, axis=1))))


def write_obj(mesh: TriangleMesh, emb: PlanarEmbedding, path) -> None:
    with open(path, "w") as fh:
        for x, y in emb.positions:
            fh.write(f"v {x:.17g} {y:.17g} 0\n")
        for a, b, c in mesh.faces + 1:
            fh.write(f"f {a} {b} {c}\n")


def write_svg(mesh: TriangleMesh, emb: PlanarEmbedding, path, radii=None, size: int = 800) -> None:
    """Wireframe of the layout, optionally overlaid with the packing circles."""
    p = emb.positions
    lo, hi = p.min(axis=0), p.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    pad = 0.05 * span
    scale = size / (span + 2 * pad)

    def xy(q):
        return (q[0] - lo[0] + pad) * scale, (hi[1] - q[1] + pad) * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        '<g fill="none" stroke="black" stroke-width="0.5">',
    ]
    for a, b in mesh.edges:
        (x1, y1), (x2, y2) = xy(p[a]), xy(p[b])
        out.append(f'<line x1="{x1:.3f}" y1="{y1:.3f}" x2="{x2:.3f}" y2="{y2:.3f}"/>')
    out.append("</g>")
    if radii is not None:
        out.append('<g fill="none" stroke="steelblue" stroke-width="0.5">')
        for q, r in zip(p, radii):
            x, y = xy(q)
            out.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{r * scale:.3f}"/>')
        out.append("</g>")
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")

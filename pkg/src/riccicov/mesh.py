"""Triangle mesh container, OFF/OBJ I/O and metric-derived quantities.

Every quantity downstream of the mesh (corner angles, curvature, areas) is a
function of an edge-length array, so the same routines serve the original
Euclidean metric and any metric produced by the Ricci flow.

Conventions
-----------
``faces[f] = (v0, v1, v2)`` in counterclockwise order.  Corner ``c`` of face
``f`` is vertex ``faces[f, c]``; the edge opposite corner ``c`` joins
``faces[f, (c + 1) % 3]`` and ``faces[f, (c + 2) % 3]`` and its index is
``face_edges[f, c]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class MeshError(ValueError):
    """Raised when a mesh file or array fails validation."""


class TriangleInequalityError(MeshError):
    """Raised when a face cannot be realised with the given edge lengths."""

    def __init__(self, message, faces=()):
        super().__init__(message)
        self.faces = tuple(int(f) for f in faces)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Validated, immutable triangle mesh with precomputed connectivity.

    Build instances through :meth:`from_arrays` or :func:`load_mesh`; the
    constructor assumes its arguments are already consistent.
    """

    vertices: np.ndarray
    faces: np.ndarray
    edges: np.ndarray
    face_edges: np.ndarray
    edge_faces: np.ndarray
    boundary_vertex: np.ndarray
    _vertex_faces: tuple = field(repr=False, default=())

    @classmethod
    def from_arrays(cls, vertices, faces) -> "TriangleMesh":
        vertices = np.array(vertices, dtype=np.float64)
        faces = np.array(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must have shape (F, 3), got {faces.shape}")
        if len(faces) == 0:
            raise MeshError("mesh has no faces")
        if not np.all(np.isfinite(vertices)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(vertices), axis=1))[0])
            raise MeshError(f"non-finite coordinate at vertex {bad}")
        n = len(vertices)
        out_of_range = (faces < 0) | (faces >= n)
        if out_of_range.any():
            f = int(np.flatnonzero(out_of_range.any(axis=1))[0])
            raise MeshError(f"face {f} references an invalid vertex index {faces[f].tolist()}")
        repeated = (
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 2] == faces[:, 0])
        )
        if repeated.any():
            f = int(np.flatnonzero(repeated)[0])
            raise MeshError(f"face {f} repeats a vertex {faces[f].tolist()}")
        unused = np.setdiff1d(np.arange(n), faces.ravel())
        if len(unused):
            raise MeshError(f"vertex {int(unused[0])} is not referenced by any face")

        # directed half-edges: corner c owns the half-edge opposite to it
        tail = faces[:, [1, 2, 0]].ravel()
        head = faces[:, [2, 0, 1]].ravel()
        directed = tail * n + head
        order = np.argsort(directed, kind="stable")
        dup = np.flatnonzero(np.diff(directed[order]) == 0)
        if len(dup):
            h = order[dup[0] + 1]
            raise MeshError(
                f"inconsistent orientation or non-manifold edge "
                f"({int(tail[h])}, {int(head[h])}) at face {int(h // 3)}"
            )

        lo = np.minimum(tail, head)
        hi = np.maximum(tail, head)
        keys = lo * n + hi
        uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        if counts.max() > 2:
            e = int(np.flatnonzero(counts > 2)[0])
            raise MeshError(
                f"non-manifold edge ({int(uniq[e] // n)}, {int(uniq[e] % n)}) "
                f"shared by {int(counts[e])} faces"
            )
        edges = np.stack([uniq // n, uniq % n], axis=1)
        face_edges = inverse.reshape(-1, 3)

        edge_faces = np.full((len(edges), 2), -1, dtype=np.int64)
        face_of_half = np.repeat(np.arange(len(faces)), 3)
        slot = np.zeros(len(edges), dtype=np.int64)
        for h, e in enumerate(inverse):
            edge_faces[e, slot[e]] = face_of_half[h]
            slot[e] += 1

        adjacency = sparse.coo_matrix(
            (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n)
        )
        n_comp, labels = csgraph.connected_components(adjacency, directed=False)
        if n_comp > 1:
            v = int(np.flatnonzero(labels != labels[0])[0])
            raise MeshError(
                f"mesh has {n_comp} connected components (vertex {v} is not "
                f"connected to vertex 0)"
            )

        boundary_edge = edge_faces[:, 1] < 0
        boundary_vertex = np.zeros(n, dtype=bool)
        boundary_vertex[edges[boundary_edge].ravel()] = True

        vertex_faces = [[] for _ in range(n)]
        for f, tri in enumerate(faces.tolist()):
            for v in tri:
                vertex_faces[v].append(f)

        for arr in (vertices, faces, edges, face_edges, edge_faces, boundary_vertex):
            arr.setflags(write=False)
        return cls(
            vertices=vertices,
            faces=faces,
            edges=edges,
            face_edges=face_edges,
            edge_faces=edge_faces,
            boundary_vertex=boundary_vertex,
            _vertex_faces=tuple(tuple(fs) for fs in vertex_faces),
        )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def boundary_edge(self) -> np.ndarray:
        return self.edge_faces[:, 1] < 0

    @property
    def n_boundary_edges(self) -> int:
        return int(self.boundary_edge.sum())

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    def vertex_faces(self, v: int) -> tuple:
        """Indices of the faces incident to vertex ``v``."""
        return self._vertex_faces[v]

    def boundary_loops(self) -> list:
        """Boundary cycles as ordered vertex lists."""
        nxt = {}
        for e in np.flatnonzero(self.boundary_edge):
            f = self.edge_faces[e, 0]
            c = int(np.flatnonzero(self.face_edges[f] == e)[0])
            a, b = self.faces[f, (c + 1) % 3], self.faces[f, (c + 2) % 3]
            nxt[int(a)] = int(b)
        loops = []
        seen = set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            v = nxt[start]
            while v != start:
                if v in seen:
                    break
                loop.append(v)
                seen.add(v)
                v = nxt[v]
            loops.append(loop)
        return loops

    def is_disk(self) -> bool:
        return self.euler_characteristic == 1 and len(self.boundary_loops()) == 1

    def face_neighbors(self) -> list:
        """For each face, the faces sharing an edge with it."""
        out = [[] for _ in range(self.n_faces)]
        for f0, f1 in self.edge_faces[~self.boundary_edge]:
            out[f0].append(int(f1))
            out[f1].append(int(f0))
        return out

    def with_vertices(self, vertices) -> "TriangleMesh":
        """Same connectivity with new positions."""
        return TriangleMesh.from_arrays(vertices, self.faces)


# ---------------------------------------------------------------------------
# file I/O


def _read_off(lines, path):
    tokens = []
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].split()
        if body:
            tokens.append((lineno, body))
    if not tokens or tokens[0][1][0] != "OFF":
        raise MeshError(f"{path}: missing OFF header")
    header = tokens[0][1][1:]
    pos = 1
    if not header:
        if len(tokens) < 2:
            raise MeshError(f"{path}: missing counts line")
        header = tokens[1][1]
        pos = 2
    try:
        nv, nf = int(header[0]), int(header[1])
    except (IndexError, ValueError):
        raise MeshError(f"{path}: malformed counts line") from None
    if len(tokens) < pos + nv + nf:
        raise MeshError(f"{path}: expected {nv} vertices and {nf} faces, file is truncated")
    verts = []
    for lineno, body in tokens[pos : pos + nv]:
        try:
            verts.append([float(x) for x in body[:3]])
        except ValueError:
            raise MeshError(f"{path}:{lineno}: malformed vertex line") from None
        if len(body) < 3:
            raise MeshError(f"{path}:{lineno}: vertex needs 3 coordinates")
    faces = []
    for idx, (lineno, body) in enumerate(tokens[pos + nv : pos + nv + nf]):
        try:
            count = int(body[0])
            ids = [int(x) for x in body[1 : 1 + count]]
        except ValueError:
            raise MeshError(f"{path}:{lineno}: malformed face line") from None
        if count != 3 or len(ids) != 3:
            raise MeshError(f"{path}:{lineno}: non-triangle face at index {idx}")
        faces.append(ids)
    return verts, faces


def _read_obj(lines, path):
    verts, faces = [], []
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].split()
        if not body:
            continue
        if body[0] == "v":
            try:
                verts.append([float(x) for x in body[1:4]])
            except ValueError:
                raise MeshError(f"{path}:{lineno}: malformed vertex line") from None
            if len(body) < 4:
                raise MeshError(f"{path}:{lineno}: vertex needs 3 coordinates")
        elif body[0] == "f":
            if len(body) != 4:
                raise MeshError(f"{path}:{lineno}: non-triangle face at index {len(faces)}")
            try:
                ids = [int(tok.split("/")[0]) for tok in body[1:]]
            except ValueError:
                raise MeshError(f"{path}:{lineno}: malformed face line") from None
            nv = len(verts)
            faces.append([i - 1 if i > 0 else nv + i for i in ids])
    if not verts:
        raise MeshError(f"{path}: no vertices")
    return verts, faces


def load_mesh(path) -> TriangleMesh:
    """Read and validate an OFF or OBJ triangle mesh."""
    path = Path(path)
    try:
        text = path.read_text()
    except UnicodeDecodeError:
        raise MeshError(f"{path}: not a text mesh file") from None
    lines = text.splitlines()
    suffix = path.suffix.lower()
    if suffix == ".obj":
        verts, faces = _read_obj(lines, path)
    elif suffix == ".off" or (lines and lines[0].strip().startswith("OFF")):
        verts, faces = _read_off(lines, path)
    else:
        raise MeshError(f"{path}: unsupported mesh format {suffix!r}")
    try:
        return TriangleMesh.from_arrays(verts, faces)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from None


def save_mesh(mesh: TriangleMesh, path) -> None:
    """Write OFF or OBJ (chosen by suffix) with 17 significant digits."""
    path = Path(path)
    fmt = "{:.17g} {:.17g} {:.17g}\n"
    with open(path, "w") as fh:
        if path.suffix.lower() == ".obj":
            for x, y, z in mesh.vertices:
                fh.write("v " + fmt.format(x, y, z))
            for a, b, c in mesh.faces + 1:
                fh.write(f"f {a} {b} {c}\n")
        else:
            fh.write("OFF\n")
            fh.write(f"{mesh.n_vertices} {mesh.n_faces} {mesh.n_edges}\n")
            for x, y, z in mesh.vertices:
                fh.write(fmt.format(x, y, z))
            for a, b, c in mesh.faces:
                fh.write(f"3 {a} {b} {c}\n")


# ---------------------------------------------------------------------------
# metric quantities


def euclidean_edge_metric(mesh: TriangleMesh) -> np.ndarray:
    """Edge lengths from vertex positions, shape ``(n_edges,)``."""
    v = mesh.vertices
    lengths = np.linalg.norm(v[mesh.edges[:, 0]] - v[mesh.edges[:, 1]], axis=1)
    diag = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))
    tiny = lengths <= 1e-12 * diag
    if tiny.any():
        e = int(np.flatnonzero(tiny)[0])
        a, b = mesh.edges[e]
        raise MeshError(f"degenerate edge {e} ({a}, {b}) of length {lengths[e]:.3g}")
    return lengths


def face_lengths(mesh: TriangleMesh, lengths: np.ndarray) -> np.ndarray:
    """Per-face lengths, column ``c`` is the edge opposite corner ``c``."""
    return np.asarray(lengths)[mesh.face_edges]


def check_triangle_inequality(mesh: TriangleMesh, lengths: np.ndarray) -> None:
    L = face_lengths(mesh, lengths)
    slack = L.sum(axis=1, keepdims=True) - 2.0 * L
    bad = np.flatnonzero((slack <= 0).any(axis=1) | ~np.isfinite(slack).all(axis=1))
    if len(bad):
        f = int(bad[0])
        raise TriangleInequalityError(
            f"triangle inequality violated at face {f} (lengths {L[f].tolist()})", bad
        )


def _angles_from_face_lengths(L: np.ndarray) -> np.ndarray:
    a = L
    b = np.roll(L, -1, axis=1)
    c = np.roll(L, -2, axis=1)
    cos = (b * b + c * c - a * a) / (2.0 * b * c)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def corner_angles(mesh: TriangleMesh, lengths: np.ndarray) -> np.ndarray:
    """Corner angles by the law of cosines, shape ``(n_faces, 3)``."""
    check_triangle_inequality(mesh, lengths)
    return _angles_from_face_lengths(face_lengths(mesh, lengths))


def angle_sums(mesh: TriangleMesh, angles: np.ndarray) -> np.ndarray:
    return np.bincount(mesh.faces.ravel(), weights=angles.ravel(), minlength=mesh.n_vertices)


def gaussian_curvature(mesh: TriangleMesh, angles: np.ndarray) -> np.ndarray:
    """Angle deficit: ``2*pi - sum`` inside, ``pi - sum`` on the boundary."""
    total = np.where(mesh.boundary_vertex, np.pi, TWO_PI)
    return total - angle_sums(mesh, angles)


def face_areas(mesh: TriangleMesh, lengths: np.ndarray) -> np.ndarray:
    """Heron areas (numerically stable ordering) of every face."""
    L = np.sort(face_lengths(mesh, lengths), axis=1)[:, ::-1]
    a, b, c = L[:, 0], L[:, 1], L[:, 2]
    prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(np.clip(prod, 0.0, None))


def one_ring_areas(mesh: TriangleMesh, lengths: np.ndarray) -> np.ndarray:
    """One-ring area of every vertex."""
    area = face_areas(mesh, lengths)
    return np.bincount(mesh.faces.ravel(), weights=np.repeat(area, 3), minlength=mesh.n_vertices)


def one_ring_area(mesh: TriangleMesh, lengths: np.ndarray, v: int) -> float:
    if not 0 <= v < mesh.n_vertices:
        raise IndexError(f"vertex {v} out of range")
    area = face_areas(mesh, lengths)
    return float(area[list(mesh.vertex_faces(v))].sum())


def edge_laplacian(mesh: TriangleMesh, weights: np.ndarray) -> sparse.csr_matrix:
    """Symmetric matrix with ``-w`` on edges and row sums on the diagonal."""
    n = mesh.n_vertices
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    w = np.asarray(weights, dtype=np.float64)
    diag = np.bincount(i, weights=w, minlength=n) + np.bincount(j, weights=w, minlength=n)
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([j, i, np.arange(n)])
    vals = np.concatenate([-w, -w, diag])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))

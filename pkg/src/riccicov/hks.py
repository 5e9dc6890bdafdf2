"""Cotangent Laplacian, its spectrum and the heat kernel signature."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

from .mesh import TriangleMesh, corner_angles, edge_laplacian, face_areas

logger = logging.getLogger(__name__)

FULL_SPECTRUM_MAX = 2000
DEFAULT_K = 300


class EigenError(RuntimeError):
    pass


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # (n_vertices, k), orthonormal columns

    @property
    def full(self) -> bool:
        return self.eigenvectors.shape[0] == self.eigenvectors.shape[1]

    @property
    def t_scale(self) -> float:
        """``1 / lambda_1``, the first non-zero eigenvalue."""
        nonzero = self.eigenvalues[self.eigenvalues > 1e-9 * max(self.eigenvalues[-1], 1.0)]
        return 1.0 / float(nonzero[0]) if len(nonzero) else 1.0


def cotangent_weights(mesh: TriangleMesh, lengths: np.ndarray) -> np.ndarray:
    """Half the sum of cotangents of the corners opposite each edge."""
    theta = corner_angles(mesh, lengths)
    half_cot = 0.5 / np.tan(theta)
    w = np.bincount(mesh.face_edges.ravel(), weights=half_cot.ravel(), minlength=mesh.n_edges)
    neg = int((w < 0).sum())
    if neg:
        logger.debug("%d negative cotangent weights", neg)
    return w


def laplace_matrix(mesh: TriangleMesh, weights: np.ndarray) -> sparse.csr_matrix:
    return edge_laplacian(mesh, weights)


def mass_matrix(mesh: TriangleMesh, lengths: np.ndarray) -> np.ndarray:
    """Barycentric vertex areas (diagonal lumped mass)."""
    area = face_areas(mesh, lengths)
    return np.bincount(mesh.faces.ravel(), weights=np.repeat(area / 3.0, 3), minlength=mesh.n_vertices)


def eigendecompose(L, k="full", mass: np.ndarray | None = None) -> Spectrum:
    """Smallest ``k`` eigenpairs of ``L`` (or of ``L x = lambda M x`` with lumped mass).

    With a mass matrix the eigenvectors are returned ``M``-orthonormal.
    """
    n = L.shape[0]
    if k == "full" or k >= n:
        dense = L.toarray() if sparse.issparse(L) else np.asarray(L)
        if mass is None:
            vals, vecs = np.linalg.eigh(dense)
        else:
            s = 1.0 / np.sqrt(mass)
            vals, y = np.linalg.eigh(s[:, None] * dense * s[None, :])
            vecs = s[:, None] * y
    else:
        try:
            vals, vecs = eigsh(
                sparse.csc_matrix(L),
                k=k,
                M=None if mass is None else sparse.diags(mass),
                sigma=-1e-8,
                which="LM",
            )
        except Exception as exc:  # ARPACK raises several unrelated types
            raise EigenError(f"eigensolver failed: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    # fix the sign of each eigenvector for reproducibility
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return Spectrum(vals, vecs * signs)


def default_spectrum_size(n: int):
    return "full" if n <= FULL_SPECTRUM_MAX else min(DEFAULT_K, n - 1)


def heat_kernel_signature(spec: Spectrum, t, vertices=None) -> np.ndarray:
    """``HKS(x, t) = sum_i exp(-lambda_i t) phi_i(x)^2``.

    ``t`` may be a scalar or a sequence; the result has shape
    ``(n_selected,)`` or ``(n_selected, len(t))`` respectively.
    """
    phi = spec.eigenvectors if vertices is None else spec.eigenvectors[np.asarray(vertices)]
    ts = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(ts < 0):
        raise ValueError("heat kernel time must be non-negative")
    decay = np.exp(-np.outer(spec.eigenvalues, ts))
    out = (phi * phi) @ decay
    return out[:, 0] if np.ndim(t) == 0 else out


def heat_kernel(spec: Spectrum, t: float) -> np.ndarray:
    """Full ``Phi exp(-Lambda t) Phi^T`` matrix; only sensible for small meshes."""
    phi = spec.eigenvectors
    return (phi * np.exp(-spec.eigenvalues * t)) @ phi.T


def mesh_spectrum(mesh: TriangleMesh, lengths: np.ndarray, k=None, use_mass: bool = False) -> Spectrum:
    L = laplace_matrix(mesh, cotangent_weights(mesh, lengths))
    mass = mass_matrix(mesh, lengths) if use_mass else None
    return eigendecompose(L, default_spectrum_size(mesh.n_vertices) if k is None else k, mass)

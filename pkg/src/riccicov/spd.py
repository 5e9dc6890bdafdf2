"""Covariance descriptors and kernels on the SPD manifold."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

EIG_FLOOR = 1e-12
MATCH_MODES = ("best", "worst")


class SPDError(ValueError):
    pass


@dataclass(frozen=True)
class CovDescriptor:
    matrix: np.ndarray
    reg: float = 0.0

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


@dataclass
class SubjectSignature:
    descriptors: list
    subject_id: str = ""
    label: int | None = None
    stages: list = field(default_factory=list)

    def __post_init__(self):
        if not self.descriptors:
            raise SPDError("a signature needs at least one descriptor")
        dims = {c.d for c in self.descriptors}
        if len(dims) != 1:
            raise SPDError(f"descriptors have mixed dimensions {sorted(dims)}")

    @property
    def m(self) -> int:
        return len(self.descriptors)

    @property
    def d(self) -> int:
        return self.descriptors[0].d

    def stack(self) -> np.ndarray:
        return np.stack([c.matrix for c in self.descriptors])


@dataclass(frozen=True)
class KernelParams:
    sigma: float = 1.0
    match_mode: str = "best"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("kernel bandwidth must be positive")
        if self.match_mode not in MATCH_MODES:
            raise ValueError(f"match_mode must be one of {MATCH_MODES}")


def covariance(F, reg: float = 1e-6) -> CovDescriptor:
    """Population covariance of the rows of ``F`` plus ``reg * trace / d`` ridge."""
    F = np.asarray(getattr(F, "values", F), dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    n, d = F.shape
    if n < 2:
        raise SPDError(f"covariance needs at least 2 rows, got {n}")
    shifted = F - F[0]  # constant columns become exact zeros
    centered = shifted - shifted.mean(axis=0)
    C = centered.T @ centered / n
    C = 0.5 * (C + C.T)
    tr = float(np.trace(C))
    lam = reg * tr / d if tr > 0 else reg
    return CovDescriptor(C + lam * np.eye(d), lam)


def _as_matrix(X):
    return np.asarray(getattr(X, "matrix", X), dtype=np.float64)


def _sym_eig(X: np.ndarray):
    X = 0.5 * (X + np.swapaxes(X, -1, -2))
    w, V = np.linalg.eigh(X)
    top = np.max(np.abs(w), axis=-1, keepdims=True)
    tol = 1e-14 * top
    if np.any(w <= tol):
        raise SPDError("matrix is not positive definite")
    floor = EIG_FLOOR * top
    if np.any(w < floor):
        logger.debug("flooring %d small eigenvalues", int((w < floor).sum()))
        w = np.maximum(w, floor)
    return w, V


def inv_sqrtm(X: np.ndarray) -> np.ndarray:
    w, V = _sym_eig(X)
    return (V * (1.0 / np.sqrt(w))[..., None, :]) @ np.swapaxes(V, -1, -2)


def geodesic_distance(X, Y) -> float:
    """Affine-invariant distance ``||log(X^-1/2 Y X^-1/2)||_F``."""
    X, Y = _as_matrix(X), _as_matrix(Y)
    if X.shape != Y.shape:
        raise SPDError(f"dimension mismatch {X.shape} vs {Y.shape}")
    _sym_eig(Y)
    S = inv_sqrtm(X)
    M = S @ Y @ S
    theta = np.linalg.eigvalsh(0.5 * (M + M.T))
    return float(np.sqrt(np.sum(np.log(theta) ** 2)))


def pairwise_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Geodesic distances between stacks ``A (p, d, d)`` and ``B (q, d, d)``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    _sym_eig(B)
    S = inv_sqrtm(A)
    M = S[:, None] @ B[None, :] @ S[:, None]
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    theta = np.linalg.eigvalsh(M)
    return np.sqrt(np.sum(np.log(theta) ** 2, axis=-1))


def rbf_from_distance(dist, sigma: float):
    return np.exp(-np.square(dist) / (2.0 * sigma * sigma))


def rbf_kernel(X, Y, sigma: float) -> float:
    if not sigma > 0:
        raise ValueError("kernel bandwidth must be positive")
    return float(rbf_from_distance(geodesic_distance(X, Y), sigma))


def _directed(kappa: np.ndarray, mode: str) -> float:
    pick = kappa.max(axis=1) if mode == "best" else kappa.min(axis=1)
    return float(pick.mean())


def set_kernel_from_block(kappa: np.ndarray, mode: str = "best") -> float:
    """Symmetrised set kernel from the ``|S1| x |S2|`` matrix of RBF values."""
    return 0.5 * (_directed(kappa, mode) + _directed(kappa.T, mode))


def set_kernel(S1: SubjectSignature, S2: SubjectSignature, p: KernelParams) -> float:
    if S1.d != S2.d:
        raise SPDError(f"signature dimensions differ ({S1.d} vs {S2.d})")
    # fixed evaluation order makes the result exactly symmetric in its arguments
    if S2.stack().tobytes() < S1.stack().tobytes():
        S1, S2 = S2, S1
    kappa = rbf_from_distance(pairwise_distances(S1.stack(), S2.stack()), p.sigma)
    return set_kernel_from_block(kappa, p.match_mode)


def distance_blocks(signatures) -> dict:
    """Pairwise descriptor distance blocks for every unordered subject pair."""
    stacks = [s.stack() for s in signatures]
    blocks = {}
    for i in range(len(stacks)):
        for j in range(i, len(stacks)):
            blocks[i, j] = pairwise_distances(stacks[i], stacks[j])
    return blocks


def kernel_matrix(signatures, p: KernelParams, blocks: dict | None = None) -> np.ndarray:
    """Subject-by-subject set-kernel matrix."""
    blocks = distance_blocks(signatures) if blocks is None else blocks
    n = len(signatures)
    K = np.empty((n, n))
    for (i, j), dist in blocks.items():
        K[i, j] = K[j, i] = set_kernel_from_block(rbf_from_distance(dist, p.sigma), p.match_mode)
    return K


def median_bandwidth(signatures, cap: int = 10_000, seed: int = 0) -> float:
    """Median geodesic distance over (a seeded subsample of) descriptor pairs."""
    mats = np.concatenate([s.stack() for s in signatures])
    n = len(mats)
    if n < 2:
        raise SPDError("median bandwidth needs at least two descriptors")
    total = n * (n - 1) // 2
    if total <= cap:
        i, j = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        picks = rng.choice(total, size=cap, replace=False)
        i, j = _pair_from_index(picks, n)
    A = mats[i]
    B = mats[j]
    S = inv_sqrtm(A)
    M = S @ B @ S
    theta = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))
    dist = np.sqrt(np.sum(np.log(theta) ** 2, axis=-1))
    sigma = float(np.median(dist))
    if not sigma > 0:
        warnings.warn("all descriptor distances are zero; using bandwidth 1", stacklevel=2)
        return 1.0
    return sigma


def _pair_from_index(k: np.ndarray, n: int):
    # row-major enumeration of the strict upper triangle
    counts = np.arange(n - 1, 0, -1)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    i = np.searchsorted(starts, k, side="right") - 1
    j = k - starts[i] + i + 1
    return i, j


# ---------------------------------------------------------------------------
# signature files


def save_signature(sig: SubjectSignature, path) -> None:
    """Text (``.sig``/``.txt``) or binary (``.npz``) descriptor file."""
    path = Path(path)
    if path.suffix == ".npz":
        np.savez(
            path,
            subject_id=np.array(sig.subject_id),
            label=np.array(-1 if sig.label is None else sig.label),
            stages=np.array(sig.stages, dtype=np.int64),
            matrices=sig.stack(),
            reg=np.array([c.reg for c in sig.descriptors]),
        )
        return
    with open(path, "w") as fh:
        fh.write("# riccicov signature v1\n")
        label = "none" if sig.label is None else str(sig.label)
        fh.write(f"{sig.subject_id} {label} {sig.m} {sig.d}\n")
        fh.write("stages " + " ".join(str(s) for s in sig.stages) + "\n")
        for c in sig.descriptors:
            fh.write(" ".join(repr(float(x)) for x in c.matrix.ravel()) + f" reg {c.reg!r}\n")


def load_signature(path) -> SubjectSignature:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as z:
            label = int(z["label"])
            return SubjectSignature(
                [CovDescriptor(M.copy(), float(r)) for M, r in zip(z["matrices"], z["reg"])],
                subject_id=str(z["subject_id"]),
                label=None if label < 0 else label,
                stages=[int(s) for s in z["stages"]],
            )
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    sid, label, m, d = lines[0].split()
    m, d = int(m), int(d)
    stages = [int(s) for s in lines[1].split()[1:]]
    descs = []
    for ln in lines[2 : 2 + m]:
        toks = ln.split()
        vals = np.array([float(x) for x in toks[: d * d]]).reshape(d, d)
        descs.append(CovDescriptor(vals, float(toks[d * d + 1])))
    return SubjectSignature(descs, sid, None if label == "none" else int(label), stages)

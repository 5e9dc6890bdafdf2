"""Per-stage feature matrices (conformal factor, area distortion, HKS)."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .hks import Spectrum, heat_kernel_signature, mesh_spectrum
from .mesh import TriangleMesh, one_ring_areas
from .ricci import RicciTrace

logger = logging.getLogger(__name__)

COLUMNS = ("u", "AD", "HK")


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class VertexSelection:
    indices: np.ndarray
    tau: float

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class FeatureMatrix:
    stage: int
    vertices: np.ndarray
    values: np.ndarray  # (n_selected, d), columns u, AD, HK...

    @property
    def shape(self):
        return self.values.shape


def select_vertices(curvature: np.ndarray, tau: float) -> VertexSelection:
    """Vertices with ``K > tau`` or ``K < -tau``, ascending."""
    if tau < 0:
        raise ValueError("curvature threshold must be non-negative")
    curvature = np.asarray(curvature)
    idx = np.flatnonzero((curvature > tau) | (curvature < -tau))
    if len(idx) == 0:
        raise FeatureError(
            f"no vertex has |K| > {tau:g} (max |K| = {np.abs(curvature).max():.3g}); "
            "use a lower curvature threshold"
        )
    return VertexSelection(idx, float(tau))


def sample_stages(trace_or_count, m: int) -> np.ndarray:
    """``m`` stage indices evenly spread over the trace, ending at the last stage."""
    count = trace_or_count if isinstance(trace_or_count, int) else len(trace_or_count.stages)
    if count < 1:
        raise ValueError("trace has no stages")
    if m < 1:
        raise ValueError("number of sampled stages must be >= 1")
    last = count - 1
    if m > count:
        warnings.warn(
            f"requested {m} stages but the trace has only {count}; using all of them",
            stacklevel=2,
        )
        return np.arange(count)
    if m == 1:
        return np.array([last])
    wanted = np.floor(np.arange(m) * last / (m - 1) + 0.5).astype(int)
    used = set()
    picked = []
    for w in wanted:
        if w in used:
            free = [s for s in range(count) if s not in used]
            w = min(free, key=lambda s: (abs(s - w), s))
        used.add(int(w))
        picked.append(int(w))
    return np.array(sorted(picked))


def area_distortions(mesh: TriangleMesh, trace: RicciTrace, stage: int) -> np.ndarray:
    """Initial minus stage one-ring area, for every vertex."""
    return one_ring_areas(mesh, trace.stages[0].lengths) - one_ring_areas(
        mesh, trace.stages[stage].lengths
    )


def area_distortion(mesh: TriangleMesh, trace: RicciTrace, stage: int, v: int) -> float:
    return float(area_distortions(mesh, trace, stage)[v])


def stage_spectrum(mesh: TriangleMesh, trace: RicciTrace, stage: int, k=None, use_mass=False) -> Spectrum:
    return mesh_spectrum(mesh, trace.stages[stage].lengths, k=k, use_mass=use_mass)


def stage_features(
    mesh: TriangleMesh,
    trace: RicciTrace,
    stage: int,
    sel: VertexSelection,
    hks: np.ndarray,
) -> FeatureMatrix:
    """Rows ``(u, AD, HK...)`` for the selected vertices at ``stage``.

    ``hks`` holds the heat kernel signature of the selected vertices under
    the stage metric, shape ``(n_selected,)`` or ``(n_selected, n_times)``.
    """
    idx = sel.indices
    hks = np.asarray(hks, dtype=np.float64)
    if hks.ndim == 1:
        hks = hks[:, None]
    if hks.shape[0] != len(idx):
        raise FeatureError(f"HKS has {hks.shape[0]} rows for {len(idx)} selected vertices")
    u = trace.stages[stage].u[idx]
    ad = area_distortions(mesh, trace, stage)[idx]
    values = np.column_stack([u, ad, hks])
    bad = ~np.isfinite(values).all(axis=1)
    if bad.any():
        raise FeatureError(f"non-finite feature at vertex {int(idx[np.flatnonzero(bad)[0]])}, stage {stage}")
    return FeatureMatrix(stage, idx, values)


def trace_features(
    mesh: TriangleMesh,
    trace: RicciTrace,
    sel: VertexSelection,
    stages,
    hks_times=(1.0,),
    k=None,
    use_mass: bool = False,
) -> list:
    """Feature matrices for ``stages``; HKS times are in units of ``1/lambda_1`` of stage 0."""
    t_scale = stage_spectrum(mesh, trace, 0, k=k, use_mass=use_mass).t_scale
    times = np.asarray(hks_times, dtype=np.float64) * t_scale
    out = []
    for s in stages:
        spec = stage_spectrum(mesh, trace, int(s), k=k, use_mass=use_mass)
        hk = heat_kernel_signature(spec, times, sel.indices)
        out.append(stage_features(mesh, trace, int(s), sel, hk))
    return out


def write_features_csv(features, path) -> None:
    with open(path, "w") as fh:
        d = features[0].values.shape[1] if features else 3
        extra = [f"HK{i}" for i in range(d - 2)] if d > 3 else ["HK"]
        fh.write(",".join(["stage", "vertex", "u", "AD", *extra]) + "\n")
        for fm in features:
            for v, row in zip(fm.vertices, fm.values):
                fh.write(f"{fm.stage},{v}," + ",".join(repr(float(x)) for x in row) + "\n")

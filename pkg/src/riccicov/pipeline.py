"""Per-subject processing (flow, features, descriptors) and experiment drivers."""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .classify import (
    ClassificationReport,
    LabeledDataset,
    leave_one_out,
    write_sweep_csv,
)
from .config import ConfigError, DatasetManifest, ManifestEntry, PipelineConfig
from .features import FeatureMatrix, sample_stages, select_vertices, trace_features
from .mesh import load_mesh, save_mesh
from .ricci import flat_target, optimize
from .synth import NoiseSpec, SynthSpec, add_noise, generate
from .spd import (
    KernelParams,
    SubjectSignature,
    covariance,
    distance_blocks,
    kernel_matrix,
    load_signature,
    median_bandwidth,
    save_signature,
)

logger = logging.getLogger(__name__)


class SubjectError(RuntimeError):
    """A subject failed somewhere in the pipeline."""

    def __init__(self, subject_id, stage, message):
        super().__init__(f"subject {subject_id!r} failed at {stage}: {message}")
        self.subject_id = subject_id
        self.stage = stage


class ExperimentError(RuntimeError):
    pass


@dataclass
class SubjectFeatures:
    """Feature matrices at every recorded stage of one subject's flow."""

    matrices: list
    iterations: int
    converged: bool

    def save(self, path) -> None:
        np.savez(
            path,
            stage=np.array([f.stage for f in self.matrices]),
            vertices=self.matrices[0].vertices,
            values=np.stack([f.values for f in self.matrices]),
            iterations=np.array(self.iterations),
            converged=np.array(self.converged),
        )

    @classmethod
    def load(cls, path) -> "SubjectFeatures":
        with np.load(path) as z:
            verts = z["vertices"].copy()
            mats = [FeatureMatrix(int(s), verts, v.copy()) for s, v in zip(z["stage"], z["values"])]
            return cls(mats, int(z["iterations"]), bool(z["converged"]))


def _content_hash(path: Path, key: dict) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    h.update(json.dumps(key, sort_keys=True, default=list).encode())
    return h.hexdigest()[:32]


def _feature_key(cfg: PipelineConfig) -> dict:
    f = cfg.features
    return {
        "kind": "features",
        "solver": asdict(cfg.solver),
        "tau": f.tau,
        "hks_times": list(f.hks_times),
        "use_mass": f.use_mass,
    }


def compute_features(path, cfg: PipelineConfig, subject_id: str = "") -> SubjectFeatures:
    """Flow one mesh and evaluate the features at every stage (no caching)."""
    sid = subject_id or str(path)
    try:
        mesh = load_mesh(path)
    except Exception as exc:
        raise SubjectError(sid, "load", exc) from exc
    try:
        trace = optimize(mesh, flat_target(mesh, cfg.solver.boundary_target_mode), cfg.solver)
    except Exception as exc:
        raise SubjectError(sid, "ricci", exc) from exc
    if not trace.converged:
        raise SubjectError(
            sid, "ricci", f"flow did not converge (residual {trace.final.residual:.3e})"
        )
    try:
        sel = select_vertices(trace.stages[0].curvature, cfg.features.tau)
        mats = trace_features(
            mesh,
            trace,
            sel,
            range(len(trace.stages)),
            hks_times=cfg.features.hks_times,
            use_mass=cfg.features.use_mass,
        )
    except Exception as exc:
        raise SubjectError(sid, "features", exc) from exc
    return SubjectFeatures(mats, trace.iterations, trace.converged)


def subject_features(path, cfg: PipelineConfig, subject_id: str = "", cache: bool = True) -> SubjectFeatures:
    path = Path(path)
    if not cache:
        return compute_features(path, cfg, subject_id)
    try:
        digest = _content_hash(path, _feature_key(cfg))
    except OSError as exc:
        raise SubjectError(subject_id or str(path), "load", exc) from exc
    cache_dir = Path(cfg.paths.cache_dir)
    target = cache_dir / f"features-{digest}.npz"
    if target.exists():
        return SubjectFeatures.load(target)
    feats = compute_features(path, cfg, subject_id)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(".tmp.npz")
    feats.save(tmp)
    tmp.replace(target)
    return feats


def signature_from_features(
    feats: SubjectFeatures, m: int, reg: float, subject_id: str = "", label=None
) -> SubjectSignature:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        picks = sample_stages(len(feats.matrices), m)
    descs = [covariance(feats.matrices[int(s)].values, reg) for s in picks]
    return SubjectSignature(descs, subject_id, label, [int(feats.matrices[int(s)].stage) for s in picks])


def run_subject(path, cfg: PipelineConfig, subject_id: str = "", label=None, cache: bool = True) -> SubjectSignature:
    """Mesh file -> subject signature, cached by content hash."""
    path = Path(path)
    sid = subject_id or path.stem
    key = {"kind": "signature", **cfg.signature_key()}
    digest = None
    if cache:
        try:
            digest = _content_hash(path, key)
        except OSError as exc:
            raise SubjectError(sid, "load", exc) from exc
        target = Path(cfg.paths.cache_dir) / f"sig-{digest}.npz"
        if target.exists():
            sig = load_signature(target)
            return replace(sig, subject_id=sid, label=label)
    feats = subject_features(path, cfg, sid, cache=cache)
    sig = signature_from_features(feats, cfg.features.steps, cfg.features.reg, sid, label)
    if cache:
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_suffix(".tmp.npz")
        save_signature(sig, tmp)
        tmp.replace(target)
    return sig


# ---------------------------------------------------------------------------
# experiments


def _features_job(args):
    path, cfg, sid = args
    try:
        return sid, subject_features(path, cfg, sid), None
    except SubjectError as exc:
        return sid, None, str(exc)


def check_manifest(manifest: DatasetManifest, minimum: int = 2) -> None:
    counts = np.bincount([e.label for e in manifest.entries], minlength=len(manifest.class_names))
    if len(counts) != 2:
        raise ConfigError("only binary classification is supported")
    if counts.min() < minimum:
        raise ConfigError(
            f"every class needs at least {minimum} subjects, got {dict(zip(manifest.class_names, counts.tolist()))}"
        )


def collect_features(manifest: DatasetManifest, cfg: PipelineConfig) -> tuple:
    """Features for every manifest subject; returns ``(ok, failures)`` keyed by subject id."""
    entries = sorted(manifest.entries, key=lambda e: e.subject_id)
    jobs = [(manifest.resolve(e), cfg, e.subject_id) for e in entries]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_features_job, jobs))
    else:
        results = [_features_job(j) for j in jobs]
    ok, failures = {}, {}
    for sid, feats, err in results:
        if err is None:
            ok[sid] = feats
        else:
            logger.warning("excluding %s", err)
            failures[sid] = err
    return ok, failures


def build_dataset(manifest, features: dict, m: int, reg: float) -> LabeledDataset:
    labels = {e.subject_id: e.label for e in manifest.entries}
    sigs = [
        signature_from_features(features[sid], m, reg, sid, labels[sid]) for sid in sorted(features)
    ]
    counts = np.bincount([s.label for s in sigs], minlength=2)
    if counts.min() < 2:
        raise ExperimentError(f"fewer than 2 subjects left in a class after exclusions ({counts.tolist()})")
    return LabeledDataset(sigs, tuple(manifest.class_names))


def resolve_kernel(data: LabeledDataset, cfg: PipelineConfig) -> KernelParams:
    sigma = cfg.kernel.sigma
    if sigma == "median":
        sigma = median_bandwidth(data.signatures, cap=cfg.kernel.median_cap, seed=cfg.seed)
    return KernelParams(float(sigma), cfg.kernel.match_mode)


@dataclass
class ExperimentResult:
    reports: list
    failures: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures)


def _write_failures(out: Path, failures: dict) -> Path:
    p = out / "failures.json"
    p.write_text(json.dumps(failures, indent=2, sort_keys=True) + "\n")
    return p


def run_experiment(manifest: DatasetManifest, cfg: PipelineConfig, write_signatures: bool = True) -> ExperimentResult:
    """Leave-one-out KNN for every ``K`` in the config; reports go to ``paths.output_dir``."""
    check_manifest(manifest)
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    features, failures = collect_features(manifest, cfg)
    files = [_write_failures(out, failures)]
    data = build_dataset(manifest, features, cfg.features.steps, cfg.features.reg)
    if write_signatures:
        sig_dir = out / "signatures"
        sig_dir.mkdir(exist_ok=True)
        for s in data.signatures:
            save_signature(s, sig_dir / f"{s.subject_id}.sig")
    params = resolve_kernel(data, cfg)
    kernel = kernel_matrix(data.signatures, params)
    reports = []
    for K in sorted(cfg.classify.k):
        rep = leave_one_out(
            data,
            int(K),
            params,
            kernel=kernel,
            params={"m": cfg.features.steps, "tau": cfg.features.tau, "excluded": sorted(failures)},
        )
        stem = out / f"report_K{K}"
        rep.to_json(stem.with_suffix(".json"))
        rep.to_csv(stem.with_suffix(".csv"))
        files += [stem.with_suffix(".json"), stem.with_suffix(".csv")]
        reports.append(rep)
    return ExperimentResult(reports, failures, files)


def run_sweep(
    manifest: DatasetManifest,
    cfg: PipelineConfig,
    steps=tuple(range(10, 101, 10)),
    taus=None,
    Ks=None,
) -> ExperimentResult:
    """Full factorial (steps x K) sweep per curvature threshold; one CSV per threshold."""
    check_manifest(manifest)
    taus = (cfg.features.tau,) if taus is None else tuple(taus)
    Ks = tuple(cfg.classify.k) if Ks is None else tuple(Ks)
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports, files, failures = [], [], {}
    for tau in taus:
        tcfg = replace(cfg, features=replace(cfg.features, tau=float(tau)))
        features, fails = collect_features(manifest, tcfg)
        failures.update(fails)
        rows = []
        for m in sorted(steps):
            data = build_dataset(manifest, features, int(m), cfg.features.reg)
            params = resolve_kernel(data, cfg)
            kernel = kernel_matrix(data.signatures, params, distance_blocks(data.signatures))
            for K in sorted(Ks):
                rows.append(
                    leave_one_out(data, int(K), params, kernel=kernel, params={"m": int(m), "tau": float(tau)})
                )
        name = "sweep.csv" if len(taus) == 1 else f"sweep_tau{tau:g}.csv"
        write_sweep_csv(rows, out / name)
        files.append(out / name)
        reports += rows
    files.append(_write_failures(out, failures))
    return ExperimentResult(reports, failures, files)


def reports_table(reports) -> str:
    """Plain-text table of reports in the sweep column order."""
    head = f"{'Steps':>5} {'K':>3} {'ACC':>7} {'PRE':>7} {'SPE':>7} {'SEN':>7} {'F1':>7}"
    lines = [head]
    for r in reports:
        m = r.params.get("m", "")
        lines.append(
            f"{m!s:>5} {r.params.get('K', ''):>3} {r.ACC:7.2f} {r.PRE:7.2f} {r.SPE:7.2f} {r.SEN:7.2f} {r.F1:7.2f}"
        )
    return "\n".join(lines)


def load_report(path) -> ClassificationReport:
    data = json.loads(Path(path).read_text())
    return ClassificationReport(**data)


# ---------------------------------------------------------------------------
# synthetic datasets


def write_synthetic_dataset(
    out_dir,
    n_per_class=(20, 20),
    resolution: int = 500,
    bump_count: int = 3,
    bump_amplitude: float = 0.15,
    bump_radius: float = 0.2,
    base: str = "sphere-cap",
    seed: int = 0,
) -> DatasetManifest:
    """Smooth (label 0) and bumpy (label 1) caps written as OFF plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for label, count in enumerate(n_per_class):
        for i in range(count):
            sub_seed = seed * 100_003 + label * 10_007 + i
            spec = SynthSpec(
                label=label,
                base=base,
                bump_count=bump_count if label == 1 else 0,
                bump_amplitude=bump_amplitude if label == 1 else 0.0,
                bump_radius=bump_radius,
                resolution=resolution,
                seed=sub_seed,
            )
            sid = f"{'bumpy' if label else 'smooth'}{i:03d}"
            save_mesh(generate(spec), out / f"{sid}.off")
            entries.append(ManifestEntry(sid, f"{sid}.off", label, sub_seed))
    manifest = DatasetManifest(entries, ("smooth", "bumpy"), root=out)
    manifest.save(out / "manifest.json")
    return manifest


def write_noisy_dataset(manifest: DatasetManifest, out_dir, sigma: float, relative: bool = True, seed: int = 0) -> DatasetManifest:
    """Copy of ``manifest`` with Gaussian normal noise applied to every mesh."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, e in enumerate(sorted(manifest.entries, key=lambda e: e.subject_id)):
        mesh = load_mesh(manifest.resolve(e))
        noisy = add_noise(mesh, NoiseSpec(sigma, relative, seed * 100_003 + k))
        save_mesh(noisy, out / f"{e.subject_id}.off")
        entries.append(ManifestEntry(e.subject_id, f"{e.subject_id}.off", e.label, e.seed))
    noisy_manifest = DatasetManifest(entries, manifest.class_names, root=out)
    noisy_manifest.save(out / "manifest.json")
    return noisy_manifest

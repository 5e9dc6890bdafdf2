"""Pipeline configuration (YAML key-value file) and dataset manifests."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .ricci import SolverConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureConfig:
    tau: float = 0.05
    steps: int = 20
    hks_times: tuple = (1.0,)  # multiples of 1/lambda_1 of the initial metric
    reg: float = 1e-6
    use_mass: bool = False

    def __post_init__(self):
        if self.tau < 0:
            raise ConfigError("features.tau must be >= 0")
        if self.steps < 1:
            raise ConfigError("features.steps must be >= 1")
        if not self.hks_times or any(t < 0 for t in self.hks_times):
            raise ConfigError("features.hks_times must be non-empty and non-negative")
        if self.reg < 0:
            raise ConfigError("features.reg must be >= 0")


@dataclass(frozen=True)
class KernelConfig:
    sigma: float | str = "median"
    match_mode: str = "best"
    median_cap: int = 10_000

    def __post_init__(self):
        if self.sigma != "median" and not (isinstance(self.sigma, (int, float)) and self.sigma > 0):
            raise ConfigError("kernel.sigma must be 'median' or a positive number")
        if self.match_mode not in ("best", "worst"):
            raise ConfigError("kernel.match_mode must be 'best' or 'worst'")


@dataclass(frozen=True)
class ClassifyConfig:
    k: tuple = (3,)
    positive_class: int = 1

    def __post_init__(self):
        if not self.k or any(int(x) < 1 or int(x) % 2 == 0 for x in self.k):
            raise ConfigError("classify.k must be a list of positive odd integers")


@dataclass(frozen=True)
class PathConfig:
    cache_dir: str = ".riccicov-cache"
    output_dir: str = "out"


@dataclass(frozen=True)
class PipelineConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    classify: ClassifyConfig = field(default_factory=ClassifyConfig)
    paths: PathConfig = field(default_factory=PathConfig)
    seed: int = 0
    jobs: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    def signature_key(self) -> dict:
        """Settings that influence a subject's descriptors (for cache keys)."""
        return {"solver": asdict(self.solver), "features": asdict(self.features)}

    def override(self, **kw) -> "PipelineConfig":
        """Apply CLI-style overrides; ``None`` values are ignored."""
        cfg = self
        if kw.get("k") is not None:
            cfg = replace(cfg, classify=replace(cfg.classify, k=tuple(kw["k"])))
        if kw.get("steps") is not None:
            cfg = replace(cfg, features=replace(cfg.features, steps=int(kw["steps"])))
        if kw.get("tau") is not None:
            cfg = replace(cfg, features=replace(cfg.features, tau=float(kw["tau"])))
        if kw.get("sigma") is not None:
            s = kw["sigma"]
            cfg = replace(cfg, kernel=replace(cfg.kernel, sigma=s if s == "median" else float(s)))
        if kw.get("match_mode") is not None:
            cfg = replace(cfg, kernel=replace(cfg.kernel, match_mode=kw["match_mode"]))
        if kw.get("seed") is not None:
            cfg = replace(cfg, seed=int(kw["seed"]))
        if kw.get("jobs") is not None:
            cfg = replace(cfg, jobs=int(kw["jobs"]))
        if kw.get("out") is not None:
            cfg = replace(cfg, paths=replace(cfg.paths, output_dir=str(kw["out"])))
        return cfg


_SECTIONS = {
    "solver": SolverConfig,
    "features": FeatureConfig,
    "kernel": KernelConfig,
    "classify": ClassifyConfig,
    "paths": PathConfig,
}


def _build(cls, raw, section):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def config_from_dict(raw: dict) -> PipelineConfig:
    raw = dict(raw or {})
    unknown = set(raw) - set(_SECTIONS) - {"seed", "jobs"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    parts = {name: _build(cls, raw.get(name), name) for name, cls in _SECTIONS.items()}
    return PipelineConfig(**parts, seed=int(raw.get("seed", 0)), jobs=int(raw.get("jobs", 1)))


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


def dump_config(cfg: PipelineConfig, path) -> None:
    data = json.loads(json.dumps(cfg.to_dict()))  # tuples -> lists
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))


# ---------------------------------------------------------------------------
# manifests

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    path: str
    label: int
    seed: int | None = None


@dataclass
class DatasetManifest:
    entries: list
    class_names: tuple = ("CN", "AD")
    version: int = MANIFEST_VERSION
    root: Path = Path(".")

    def __post_init__(self):
        ids = [e.subject_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ConfigError(f"duplicate subject ids in manifest: {dup}")
        for e in self.entries:
            if e.label not in range(len(self.class_names)):
                raise ConfigError(f"subject {e.subject_id!r} has label {e.label} outside the class set")

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def save(self, path) -> None:
        data = {
            "version": self.version,
            "classes": list(self.class_names),
            "subjects": [
                {"id": e.subject_id, "path": e.path, "label": e.label}
                | ({} if e.seed is None else {"seed": e.seed})
                for e in self.entries
            ],
        }
        Path(path).write_text(json.dumps(data, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"manifest {path} does not exist")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if data.get("version") != MANIFEST_VERSION:
            raise ConfigError(f"{path}: unsupported manifest version {data.get('version')!r}")
        try:
            entries = [
                ManifestEntry(str(s["id"]), str(s["path"]), int(s["label"]), s.get("seed"))
                for s in data["subjects"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: malformed subject entry ({exc})") from None
        return cls(entries, tuple(data.get("classes", ("CN", "AD"))), root=path.parent)

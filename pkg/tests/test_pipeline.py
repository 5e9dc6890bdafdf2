import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from riccicov.classify import SWEEP_COLUMNS, read_sweep_csv
from riccicov.cli import main
from riccicov.config import (
    ConfigError,
    DatasetManifest,
    ManifestEntry,
    PipelineConfig,
    config_from_dict,
    dump_config,
    load_config,
)
from riccicov.pipeline import (
    SubjectError,
    check_manifest,
    run_experiment,
    run_subject,
    run_sweep,
    write_noisy_dataset,
    write_synthetic_dataset,
)
from riccicov.spd import load_signature


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    return write_synthetic_dataset(root, n_per_class=(4, 4), resolution=120, seed=1)


def small_config(tmp_path, **kw):
    cfg = config_from_dict({"paths": {"cache_dir": str(tmp_path / "cache"), "output_dir": str(tmp_path / "out")}})
    return cfg.override(**kw)


# -- config ---------------------------------------------------------------


def test_default_config():
    cfg = load_config()
    assert cfg.features.tau == 0.05 and cfg.features.steps == 20
    assert cfg.classify.k == (3,) and cfg.kernel.sigma == "median" and cfg.kernel.match_mode == "best"
    assert cfg.solver.epsilon == 1e-6 and cfg.solver.max_iterations == 200


def test_config_round_trip(tmp_path):
    cfg = PipelineConfig().override(k=[1, 3, 5], steps=40, tau=0.1, sigma="2.5", seed=7)
    dump_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg


@pytest.mark.parametrize(
    "raw,match",
    [
        ({"bogus": 1}, "unknown config keys"),
        ({"features": {"tau": -1}}, "tau"),
        ({"features": {"colour": 1}}, "unknown keys"),
        ({"classify": {"k": [2]}}, "odd"),
        ({"kernel": {"sigma": -1}}, "sigma"),
        ({"solver": {"epsilon": 0}}, "epsilon"),
    ],
)
def test_config_validation(raw, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(raw)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(tmp_path / "nope.yaml")


def test_manifest_round_trip(tmp_path):
    m = DatasetManifest([ManifestEntry("a", "a.off", 0, 3), ManifestEntry("b", "b.off", 1)], ("x", "y"))
    m.save(tmp_path / "m.json")
    back = DatasetManifest.load(tmp_path / "m.json")
    assert back.entries == m.entries and back.class_names == ("x", "y")
    assert back.resolve(back.entries[0]) == tmp_path / "a.off"


def test_manifest_validation(tmp_path):
    with pytest.raises(ConfigError, match="duplicate"):
        DatasetManifest([ManifestEntry("a", "a.off", 0), ManifestEntry("a", "b.off", 1)])
    with pytest.raises(ConfigError, match="outside the class set"):
        DatasetManifest([ManifestEntry("a", "a.off", 4)])
    (tmp_path / "v.json").write_text(json.dumps({"version": 9, "subjects": []}))
    with pytest.raises(ConfigError, match="version"):
        DatasetManifest.load(tmp_path / "v.json")


def test_single_subject_class_rejected():
    m = DatasetManifest([ManifestEntry("a", "a.off", 0), ManifestEntry("b", "b.off", 0), ManifestEntry("c", "c.off", 1)])
    with pytest.raises(ConfigError, match="at least 2"):
        check_manifest(m)


# -- subjects ---------------------------------------------------------------


def test_run_subject_shape_and_cache(tmp_path, small_dataset):
    cfg = small_config(tmp_path)
    path = small_dataset.resolve(small_dataset.entries[0])
    sig = run_subject(path, cfg, "s0", 0)
    assert sig.d == 3 and sig.m >= 1 and sig.stages[0] == 0
    for C in sig.stack():
        assert np.linalg.eigvalsh(C).min() > 0
    cached = list((tmp_path / "cache").glob("sig-*.npz"))
    assert len(cached) == 1
    again = run_subject(path, cfg, "s0", 0)
    assert np.array_equal(again.stack(), sig.stack()) and again.stages == sig.stages
    fresh = run_subject(path, cfg, "s0", 0, cache=False)
    assert np.array_equal(fresh.stack(), sig.stack())


def test_cache_key_tracks_settings(tmp_path, small_dataset):
    path = small_dataset.resolve(small_dataset.entries[0])
    run_subject(path, small_config(tmp_path), "s0")
    run_subject(path, small_config(tmp_path, tau=0.1), "s0")
    assert len(list((tmp_path / "cache").glob("sig-*.npz"))) == 2


def test_corrupted_mesh_is_a_load_error(tmp_path):
    bad = tmp_path / "bad.off"
    bad.write_text("OFF\n3 1 0\n0 0 0\n1 0\n")
    with pytest.raises(SubjectError) as info:
        run_subject(bad, small_config(tmp_path), "bad")
    assert info.value.stage == "load" and "bad" in str(info.value)


def test_non_convergence_excludes_subject(tmp_path, small_dataset):
    cfg = small_config(tmp_path)
    cfg = replace(cfg, solver=replace(cfg.solver, max_iterations=1))
    with pytest.raises(SubjectError, match="did not converge"):
        run_subject(small_dataset.resolve(small_dataset.entries[0]), cfg, "s0", cache=False)


# -- experiments ---------------------------------------------------------------


def test_experiment_writes_reports(tmp_path, small_dataset):
    cfg = small_config(tmp_path, k=[1, 3])
    res = run_experiment(small_dataset, cfg)
    assert not res.partial and len(res.reports) == 2
    out = tmp_path / "out"
    for K in (1, 3):
        rep = json.loads((out / f"report_K{K}.json").read_text())
        assert rep["TP"] + rep["TN"] + rep["FP"] + rep["FN"] == 8
        assert rep["params"]["K"] == K
    assert len(list((out / "signatures").glob("*.sig"))) == 8
    assert load_signature(out / "signatures" / "bumpy000.sig").label == 1
    assert json.loads((out / "failures.json").read_text()) == {}


def test_failure_isolation(tmp_path, small_dataset):
    root = Path(small_dataset.root)
    (tmp_path / "broken.off").write_text("not a mesh\n")
    entries = list(small_dataset.entries) + [ManifestEntry("zz_broken", str(tmp_path / "broken.off"), 1)]
    manifest = DatasetManifest(entries, small_dataset.class_names, root=root)
    res = run_experiment(manifest, small_config(tmp_path / "a"), write_signatures=True)
    run_experiment(small_dataset, small_config(tmp_path / "b"), write_signatures=True)
    assert res.partial and list(res.failures) == ["zz_broken"]
    for sid in ("smooth000", "bumpy003"):
        a = load_signature(tmp_path / "a" / "out" / "signatures" / f"{sid}.sig")
        b = load_signature(tmp_path / "b" / "out" / "signatures" / f"{sid}.sig")
        assert np.array_equal(a.stack(), b.stack())


def test_small_sweep_layout(tmp_path, small_dataset):
    res = run_sweep(small_dataset, small_config(tmp_path), steps=[10, 20], Ks=[1, 3, 5])
    header, rows = read_sweep_csv(tmp_path / "out" / "sweep.csv")
    assert tuple(header) == SWEEP_COLUMNS
    assert [(r["Steps"], r["K"]) for r in rows] == [(10, 1), (10, 3), (10, 5), (20, 1), (20, 3), (20, 5)]
    assert len(res.reports) == 6


def test_multi_tau_sweep_writes_one_csv_per_threshold(tmp_path, small_dataset):
    run_sweep(small_dataset, small_config(tmp_path), steps=[10], taus=[0.05, 0.1], Ks=[1])
    assert sorted(p.name for p in (tmp_path / "out").glob("sweep*.csv")) == ["sweep_tau0.05.csv", "sweep_tau0.1.csv"]


def test_noisy_dataset(tmp_path, small_dataset):
    noisy = write_noisy_dataset(small_dataset, tmp_path / "noisy", 0.1, seed=3)
    assert [e.subject_id for e in noisy.entries] == sorted(e.subject_id for e in small_dataset.entries)
    assert (tmp_path / "noisy" / "manifest.json").exists()


def test_synthetic_dataset_is_reproducible(tmp_path):
    write_synthetic_dataset(tmp_path / "a", (2, 2), resolution=60, seed=5)
    write_synthetic_dataset(tmp_path / "b", (2, 2), resolution=60, seed=5)
    for name in ("smooth000.off", "bumpy001.off", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.slow
def test_parallel_matches_serial(tmp_path, small_dataset):
    run_experiment(small_dataset, small_config(tmp_path / "s"))
    run_experiment(small_dataset, small_config(tmp_path / "p", jobs=2))
    a = (tmp_path / "s" / "out" / "report_K3.json").read_bytes()
    b = (tmp_path / "p" / "out" / "report_K3.json").read_bytes()
    assert a == b


# -- command line ---------------------------------------------------------------


def cli_args(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(f"paths:\n  cache_dir: {tmp_path / 'cache'}\n")
    return ["--config", str(cfg)]


def test_cli_flow(tmp_path, small_dataset, capsys):
    mesh = small_dataset.resolve(small_dataset.entries[-1])
    code = main(["flow", str(mesh), "--out", str(tmp_path / "flow")] + cli_args(tmp_path))
    assert code == 0
    stem = Path(mesh).stem
    for suffix in ("_trace.npz", "_embedding.obj", "_embedding.svg"):
        assert (tmp_path / "flow" / f"{stem}{suffix}").exists()
    assert "converged=True" in capsys.readouterr().out


def test_cli_features_and_descriptors(tmp_path, small_dataset):
    mesh = str(small_dataset.resolve(small_dataset.entries[0]))
    assert main(["features", mesh, "--out", str(tmp_path / "f.csv"), "--steps", "2"] + cli_args(tmp_path)) == 0
    assert (tmp_path / "f.csv").read_text().startswith("stage,vertex,u,AD,HK")
    assert main(["descriptors", mesh, "--out", str(tmp_path / "s.sig"), "--label", "0"] + cli_args(tmp_path)) == 0
    assert load_signature(tmp_path / "s.sig").d == 3


def test_cli_classify_sweep_report(tmp_path, small_dataset, capsys):
    man = str(Path(small_dataset.root) / "manifest.json")
    out = tmp_path / "res"
    assert main(["classify", "--manifest", man, "--out", str(out), "--k", "1,3"] + cli_args(tmp_path)) == 0
    assert main(["sweep", "--manifest", man, "--out", str(out), "--steps", "10,20", "--k", "1"] + cli_args(tmp_path)) == 0
    capsys.readouterr()
    assert main(["report", str(out / "report_K3.json"), str(out / "sweep.csv")]) == 0
    text = capsys.readouterr().out
    assert "Steps" in text and "ACC" in text


def test_cli_synth_and_noise(tmp_path):
    assert main(["synth", "--n0", "2", "--n1", "2", "--resolution", "60", "--out", str(tmp_path / "d")]) == 0
    man = str(tmp_path / "d" / "manifest.json")
    assert main(["noise", "--manifest", man, "--sigma", "0.1", "--out", str(tmp_path / "n")]) == 0
    assert len(DatasetManifest.load(tmp_path / "n" / "manifest.json").entries) == 4


def test_cli_exit_codes(tmp_path, small_dataset):
    bad = tmp_path / "bad.off"
    bad.write_text("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    assert main(["descriptors", str(bad)] + cli_args(tmp_path)) == 1
    assert main(["classify", "--manifest", str(tmp_path / "missing.json")]) == 1

    # every subject fails to converge: nothing left to classify
    cfg = tmp_path / "tight.yaml"
    cfg.write_text(f"solver:\n  max_iterations: 1\npaths:\n  cache_dir: {tmp_path / 'c2'}\n")
    man = str(Path(small_dataset.root) / "manifest.json")
    assert main(["classify", "--manifest", man, "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    # one unreadable subject: partial result
    entries = list(small_dataset.entries) + [ManifestEntry("zz", str(bad), 1)]
    DatasetManifest(entries, small_dataset.class_names, root=Path(small_dataset.root)).save(tmp_path / "m.json")
    # relative paths in the copied manifest resolve against its own folder
    for e in small_dataset.entries:
        (tmp_path / e.path).write_bytes(small_dataset.resolve(e).read_bytes())
    code = main(["classify", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "p")] + cli_args(tmp_path))
    assert code == 3

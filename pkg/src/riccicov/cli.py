"""Command line entry point: ``riccicov <subcommand> ...``.

Exit codes: 0 success, 1 validation error, 2 compute failure, 3 partial
failure (some subjects excluded).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .classify import ClassifyError, read_sweep_csv
from .config import ConfigError, DatasetManifest, load_config
from .mesh import MeshError

EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTE, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("riccicov")


def _int_list(text):
    return [int(x) for x in str(text).replace(",", " ").split()]


def _float_list(text):
    return [float(x) for x in str(text).replace(",", " ").split()]


def _common(p, manifest=False):
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--out", help="output directory or file")
    p.add_argument("--k", type=_int_list, help="KNN neighbour counts, e.g. 1,3,5")
    p.add_argument("--steps", help="number of sampled stages (list for sweep)")
    p.add_argument("--tau", help="curvature threshold (list for sweep)")
    p.add_argument("--sigma", help="kernel bandwidth or 'median'")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--match-mode", choices=("best", "worst"))
    if manifest:
        p.add_argument("--manifest", required=True, help="dataset manifest (JSON)")


def _config(args, single=True):
    cfg = load_config(args.config)
    steps = tau = None
    if single:
        steps = int(args.steps) if args.steps is not None else None
        tau = float(args.tau) if args.tau is not None else None
    return cfg.override(
        k=args.k,
        steps=steps,
        tau=tau,
        sigma=args.sigma,
        seed=args.seed,
        jobs=args.jobs,
        match_mode=args.match_mode,
        out=args.out,
    )


def cmd_flow(args):
    import numpy as np

    from .embed import EmbeddingError, flatten, write_obj, write_svg
    from .mesh import load_mesh

    cfg = _config(args)
    mesh = load_mesh(args.mesh)
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.mesh).stem
    try:
        trace, emb = flatten(mesh, cfg.solver)
    except EmbeddingError as exc:
        log.error("%s: %s", stem, exc)
        return EXIT_COMPUTE
    trace.save(out / f"{stem}_trace.npz")
    print(f"{stem}: {trace.iterations} iterations, residual {trace.final.residual:.3e}, "
          f"converged={trace.converged}")
    write_obj(mesh, emb, out / f"{stem}_embedding.obj")
    write_svg(mesh, emb, out / f"{stem}_embedding.svg", radii=trace.radii(-1))
    rel = np.abs(emb.edge_lengths(mesh) - trace.final.lengths) / trace.final.lengths
    print(f"embedding: max relative length error {rel.max():.2e}, "
          f"min signed area {emb.signed_areas(mesh).min():.3e}")
    return EXIT_OK


def cmd_features(args):
    from .features import sample_stages, write_features_csv
    from .pipeline import compute_features

    cfg = _config(args)
    feats = compute_features(args.mesh, cfg)
    picks = sample_stages(len(feats.matrices), cfg.features.steps)
    out = Path(args.out or f"{Path(args.mesh).stem}_features.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_features_csv([feats.matrices[int(s)] for s in picks], out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_descriptors(args):
    from .pipeline import run_subject
    from .spd import save_signature

    cfg = _config(args)
    sig = run_subject(args.mesh, cfg, args.subject_id or Path(args.mesh).stem, args.label,
                      cache=not args.no_cache)
    out = Path(args.out or f"{Path(args.mesh).stem}.sig")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_signature(sig, out)
    print(f"wrote {out} ({sig.m} descriptors of size {sig.d})")
    return EXIT_OK


def cmd_classify(args):
    from .pipeline import reports_table, run_experiment

    cfg = _config(args)
    res = run_experiment(DatasetManifest.load(args.manifest), cfg)
    print(reports_table(res.reports))
    return EXIT_PARTIAL if res.partial else EXIT_OK


def cmd_sweep(args):
    from .pipeline import reports_table, run_sweep

    cfg = _config(args, single=False)
    steps = _int_list(args.steps) if args.steps else list(range(10, 101, 10))
    taus = _float_list(args.tau) if args.tau else None
    Ks = args.k or [1, 3, 5]
    res = run_sweep(DatasetManifest.load(args.manifest), cfg, steps=steps, taus=taus, Ks=Ks)
    print(reports_table(res.reports))
    return EXIT_PARTIAL if res.partial else EXIT_OK


def cmd_synth(args):
    from .pipeline import write_synthetic_dataset

    out = Path(args.out or "synthetic")
    man = write_synthetic_dataset(
        out,
        n_per_class=(args.n0, args.n1),
        resolution=args.resolution,
        bump_count=args.bumps,
        bump_amplitude=args.amplitude,
        bump_radius=args.bump_radius,
        base=args.base,
        seed=args.seed or 0,
    )
    print(f"wrote {len(man.entries)} meshes and {out / 'manifest.json'}")
    return EXIT_OK


def cmd_noise(args):
    from .pipeline import write_noisy_dataset

    if args.sigma is None:
        raise ConfigError("--sigma is required for noise")
    out = Path(args.out or "noisy")
    man = write_noisy_dataset(
        DatasetManifest.load(args.manifest), out, float(args.sigma),
        relative=not args.absolute, seed=args.seed or 0,
    )
    print(f"wrote {len(man.entries)} noisy meshes and {out / 'manifest.json'}")
    return EXIT_OK


def cmd_report(args):
    from .pipeline import load_report, reports_table

    for path in args.files:
        path = Path(path)
        print(f"== {path}")
        if path.suffix == ".csv":
            header, rows = read_sweep_csv(path)
            print(" ".join(f"{h:>7}" for h in header))
            for r in rows:
                print(" ".join(f"{r[h]:>7.2f}" if isinstance(r[h], float) else f"{r[h]:>7}" for h in header))
        else:
            rep = load_report(path)
            print(reports_table([rep]))
            print(json.dumps({k: getattr(rep, k) for k in ("TP", "TN", "FP", "FN")}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riccicov", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", help="Ricci flow + planar embedding of one mesh")
    p.add_argument("mesh")
    _common(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("features", help="per-stage feature CSV of one mesh")
    p.add_argument("mesh")
    _common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("descriptors", help="covariance signature file of one mesh")
    p.add_argument("mesh")
    p.add_argument("--subject-id")
    p.add_argument("--label", type=int)
    p.add_argument("--no-cache", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_descriptors)

    p = sub.add_parser("classify", help="leave-one-out KNN over a manifest")
    _common(p, manifest=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sweep", help="steps x K sweep, one CSV row per (steps, K)")
    _common(p, manifest=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic two-class dataset")
    p.add_argument("--n0", type=int, default=20)
    p.add_argument("--n1", type=int, default=20)
    p.add_argument("--resolution", type=int, default=500)
    p.add_argument("--bumps", type=int, default=3)
    p.add_argument("--amplitude", type=float, default=0.15)
    p.add_argument("--bump-radius", type=float, default=0.2)
    p.add_argument("--base", choices=("sphere-cap", "ellipsoid-cap"), default="sphere-cap")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("noise", help="add Gaussian normal noise to every mesh of a manifest")
    _common(p, manifest=True)
    p.add_argument("--absolute", action="store_true", help="sigma in model units")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("report", help="print report JSON or sweep CSV files")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    from .pipeline import ExperimentError, SubjectError

    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, MeshError, ClassifyError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except SubjectError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION if exc.stage == "load" else EXIT_COMPUTE
    except ExperimentError as exc:
        log.error("%s", exc)
        return EXIT_COMPUTE
    except Exception as exc:  # noqa: BLE001
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())

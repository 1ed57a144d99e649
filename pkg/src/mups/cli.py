"""Command-line entry point: synth, features, estimate, train, eval, bench.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
Every run writes a JSON manifest next to its output.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cloud import ScaleSpec, build_index
from .data import SHAPES, CorruptionSpec, ShapeSpec, corrupt, generate, load_pcpnet, save_pcpnet, write_normals
from .errors import ConfigError, DataError, MupsError, NumericError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def resolve_workers(requested: int) -> int:
    env = os.environ.get("NESTI_THREADS")
    if env:
        try:
            requested = int(env)
        except ValueError:
            raise ConfigError(f"NESTI_THREADS must be an integer, got {env!r}") from None
    if requested < 1:
        raise ConfigError("worker count must be >= 1")
    return requested


def write_manifest(path, args, extra=None):
    cfg = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items() if k != "func"}
    data = {
        "version": __version__,
        "command": args.command,
        "config": cfg,
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
    }
    if extra:
        data.update(extra)
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=str)
    return path


def _scale_specs(args):
    specs = [ScaleSpec(r, args.tmax) for r in args.scales]
    if list(args.scales) != sorted(args.scales):
        raise ConfigError("--scales must be ascending")
    return specs


def _load(args):
    cloud, queries = load_pcpnet(args.input, args.name)
    if queries is None:
        queries = np.arange(len(cloud))
    return cloud, queries


# -- subcommands ---------------------------------------------------------------

def cmd_synth(args):
    cloud = generate(ShapeSpec(
        args.shape, count=args.count, size=args.size, radius=args.radius,
        height=args.height, angle=args.angle, seed=args.seed,
    ))
    for i, text in enumerate(args.corrupt):
        cloud = corrupt(cloud, CorruptionSpec.parse(text, seed=args.seed + 1 + i))
    queries = None
    if args.queries:
        rng = np.random.default_rng(args.seed)
        queries = np.sort(rng.choice(len(cloud), min(args.queries, len(cloud)), replace=False))
    save_pcpnet(args.out, args.name, cloud, queries)
    write_manifest(Path(args.out) / f"{args.name}.manifest.json", args, {"points": len(cloud)})
    print(f"wrote {len(cloud)} points to {Path(args.out) / args.name}.xyz")


def cmd_features(args):
    from .fv import encode_queries, write_csv, write_dump
    from .gmm import build_grid

    cloud, queries = _load(args)
    specs = _scale_specs(args)
    t0 = time.perf_counter()
    feats, valid = encode_queries(
        build_index(cloud), build_grid(args.m), queries, specs, seed=args.seed,
        workers=args.workers, normalize_extrema=args.normalize_extrema,
    )
    seconds = time.perf_counter() - t0
    kept = queries[valid]
    out = Path(args.out)
    header = write_dump(out, feats[valid], n=len(specs), m=args.m)
    np.savetxt(out.with_suffix(".queries"), kept, fmt="%d")
    if args.csv:
        write_csv(args.csv, feats[valid], len(specs), args.m, kept)
    dropped = int((~valid).sum())
    if dropped:
        print(f"dropped {dropped} degenerate queries", file=sys.stderr)
    write_manifest(Path(str(out) + ".manifest.json"), args, {
        "count": header.count, "dropped": dropped, "ms_per_point": 1e3 * seconds / max(len(queries), 1),
    })
    print(f"wrote {header.count} MuPS records (n={header.n}, m={header.m}) to {out}")


def cmd_estimate(args):
    from .evaluation import GeometricMethod, MoeMethod
    from .geom import BaselineConfig

    cloud, queries = _load(args)
    if args.method == "moe":
        if not args.model:
            raise ConfigError("--method moe needs --model")
        from .moe import load_model

        method = MoeMethod(load_model(args.model))
    else:
        method = GeometricMethod(BaselineConfig(args.method, args.k))
    est = method.estimate(cloud, queries, workers=args.workers, seed=args.seed)
    write_normals(args.out, est.normals)
    failures = int((~est.ok).sum())
    if failures:
        print(f"{failures} queries could not be estimated (written as nan)", file=sys.stderr)
    write_manifest(Path(str(args.out) + ".manifest.json"), args, {
        "queries": len(queries), "failures": failures,
    })
    print(f"wrote {len(queries)} normals to {args.out}")


def _dataset_examples(args, cfg):
    """Features and ground-truth normals of up to ``--patches`` queries per listed shape."""
    from .fv import encode_queries
    from .gmm import build_grid

    if not args.shapes:
        raise ConfigError("--data needs --shapes")
    grid = build_grid(cfg.m)
    specs = [ScaleSpec(r, cfg.t_max) for r in cfg.scales]
    rng = np.random.default_rng(cfg.seed)
    X, Y = [], []
    for name in args.shapes:
        cloud, queries = load_pcpnet(args.data, name)
        if cloud.normals is None:
            raise DataError(f"{name}: training needs ground-truth normals")
        if queries is None:
            queries = np.arange(len(cloud))
        if len(queries) > cfg.train_patches:
            queries = np.sort(rng.choice(queries, cfg.train_patches, replace=False))
        feats, valid = encode_queries(build_index(cloud), grid, queries, specs, seed=cfg.seed, workers=cfg.workers)
        X.append(feats[valid])
        Y.append(cloud.normals[queries[valid]])
    X, Y = np.concatenate(X), np.concatenate(Y)
    if not len(X):
        raise DataError("no usable training queries")
    return X, Y


def cmd_train(args):
    from .experiments import SpecializationConfig
    from .moe import MoeConfig, MoeModel, StagedSchedule, save_model, train_staged

    stages = StagedSchedule(
        expert_epochs=args.expert_epochs, head_epochs=args.head_epochs, joint_epochs=args.joint_epochs,
        expert_lr=args.expert_lr, head_lr=args.head_lr, joint_lr=args.joint_lr,
        gate_lr_scale=args.gate_lr_scale, standardize=not args.no_standardize,
    )
    cfg = SpecializationConfig(
        train_patches=args.patches, test_patches=0, stages=stages, batch_size=args.batch_size,
        augment=not args.no_augment, noise=args.noise, scales=args.scales, m=args.m,
        t_max=args.tmax, seed=args.seed, workers=args.workers,
    )
    if args.data:
        X, Y = _dataset_examples(args, cfg)
    else:
        from .corpus import CorpusConfig, build_corpus

        corpus = build_corpus(CorpusConfig(
            n_patches=cfg.train_patches, noise=cfg.noise, scales=cfg.scales, t_max=cfg.t_max,
            m=cfg.m, seed=2 * cfg.seed + 1, workers=cfg.workers, patches_per_shape=cfg.patches_per_shape,
        ))
        X, Y = corpus.features, corpus.targets
    model = MoeModel(MoeConfig.desk(
        seed=args.seed, scales=cfg.scales, m=cfg.m, t_max=cfg.t_max,
        gate_preset=args.preset, expert_preset=args.preset,
    ))
    out = Path(args.out)
    os.makedirs(out, exist_ok=True)
    log = open(out / "loss_log.csv", "w", newline="")
    writer = csv.writer(log)
    writer.writerow(["epoch", "loss"])

    def on_epoch(epoch, loss):
        writer.writerow([epoch, repr(loss)])
        log.flush()
        print(f"epoch {epoch + 1}/{stages.epochs} loss {loss:.5f}")

    try:
        history = train_staged(
            model, X, Y, stages, batch_size=cfg.batch_size,
            rng=np.random.default_rng(cfg.seed), augment=cfg.augment, callback=on_epoch,
        )
    finally:
        log.close()
    save_model(model, out)
    write_manifest(out / "manifest.json", args, {"final_loss": history[-1] if history else None})
    print(f"saved model to {out}")


def _datasets(args):
    from .evaluation import Dataset

    out = []
    if args.data:
        names = args.shapes
        if not names:
            lst = Path(args.data) / "testset_no_noise.txt"
            if not lst.exists():
                raise ConfigError("--data needs --shapes or a testset_no_noise.txt list")
            names = [s.strip() for s in lst.read_text().splitlines() if s.strip()]
        for name in names:
            cloud, queries = load_pcpnet(args.data, name)
            out.append(Dataset(name, cloud, queries))
    for i, kind in enumerate(args.synthetic):
        spec = ShapeSpec(kind, count=args.count, seed=args.seed + i)
        cloud = generate(spec)
        rng = np.random.default_rng(args.seed + i)
        queries = np.sort(rng.choice(len(cloud), min(args.queries, len(cloud)), replace=False))
        out.append(Dataset(f"{kind}_{i}", cloud, queries))
    if not out:
        raise ConfigError("no datasets: give --data and/or --synthetic")
    return out


def cmd_eval(args):
    from .evaluation import EvalReport, EvalRow, make_method, run_benchmark
    from .metrics import angle_errors, pgp, rms_error

    out = Path(args.out)
    if args.predictions:
        from .data import read_normals

        if not args.data or len(args.shapes) != 1:
            raise ConfigError("--predictions needs --data and exactly one --shapes entry")
        cloud, queries = load_pcpnet(args.data, args.shapes[0])
        if cloud.normals is None:
            raise DataError("ground-truth normals are missing")
        if queries is None:
            queries = np.arange(len(cloud))
        pred = read_normals(args.predictions)
        if len(pred) != len(queries):
            raise DataError(f"{len(pred)} predictions for {len(queries)} queries")
        ok = np.all(np.isfinite(pred), axis=1)
        e = angle_errors(pred[ok], cloud.normals[queries][ok])
        row = EvalRow(Path(args.predictions).stem, "none", rms_error(e), pgp(e, 5), pgp(e, 10),
                      len(pred), int((~ok).sum()), float("nan"), float("nan"), e,
                      {args.shapes[0]: rms_error(e)})
        report = EvalReport([row], {"predictions": str(args.predictions)}, args.workers, args.seed)
    else:
        methods = [make_method(m, args.model) for m in args.methods]
        augs = [None if a == "none" else CorruptionSpec.parse(a, seed=args.seed) for a in args.augment]
        report = run_benchmark(methods, _datasets(args), augs or [None], workers=args.workers, seed=args.seed)
    csv_path, json_path = report.write(out)
    write_manifest(out / "manifest.json", args, {"report": str(json_path)})
    for r in report.rows:
        print(f"{r.method:>12} {r.augmentation:>14}  rms {r.rms_deg:7.3f}  pgp5 {r.pgp5:.3f}  "
              f"pgp10 {r.pgp10:.3f}  n={r.n_points} fail={r.n_failures}")
    print(f"wrote {csv_path}")


def cmd_bench(args):
    from .evaluation import cloud_size_timing, complexity_sweep, fit_linear

    rows = complexity_sweep(
        ms=args.m, t_maxes=args.tmax, n_points=args.points, n_queries=args.queries,
        scales=args.scales, workers=args.workers, seed=args.seed, repeats=args.repeats,
    )
    a, b, r2 = fit_linear([r["k_times_t"] for r in rows], [r["ms_per_point"] for r in rows])
    out = Path(args.out)
    os.makedirs(out.parent if out.parent != Path("") else Path("."), exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["m", "K", "t_max", "k_times_t", "ms_per_point"])
        w.writeheader()
        w.writerows(rows)
    extra = {"slope_ms": a, "intercept_ms": b, "r2": r2}
    if args.size_check:
        sizes = cloud_size_timing(seed=args.seed)
        extra["cloud_size_ms_per_point"] = {str(k): v for k, v in sizes.items()}
        print("cloud size check:", ", ".join(f"{k} pts {v:.3f} ms" for k, v in sizes.items()))
    write_manifest(Path(str(out) + ".manifest.json"), args, extra)
    for r in rows:
        print(f"m={r['m']} K={r['K']:4d} T_max={r['t_max']:4d}  {r['ms_per_point']:9.3f} ms/point")
    print(f"linear fit in K*T_max: slope {a:.3e} ms, intercept {b:.3f} ms, R^2 {r2:.4f}")


# -- parser ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="mups", description="Multi-scale point-cloud normal estimation toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, seed=True, workers=True):
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        if workers:
            sp.add_argument("--workers", type=int, default=1, help="overridden by $NESTI_THREADS")

    def encoding(sp, scales=(0.01, 0.03, 0.05), tmax=512, m=4):
        sp.add_argument("--m", type=int, default=m, help="Gaussian grid resolution per axis")
        sp.add_argument("--scales", type=_floats, default=scales, help="ball radii as fractions of the bbox diagonal")
        sp.add_argument("--tmax", type=int, default=tmax, help="points sampled per ball")

    s = sub.add_parser("synth", help="generate and corrupt a synthetic shape")
    s.add_argument("--shape", choices=SHAPES, required=True)
    s.add_argument("--count", type=int, default=10_000)
    s.add_argument("--size", type=float, default=1.0)
    s.add_argument("--radius", type=float, default=1.0)
    s.add_argument("--height", type=float, default=2.0)
    s.add_argument("--angle", type=float, default=90.0)
    s.add_argument("--corrupt", action="append", default=[], help="noise:SIGMA | gradient:AXIS:MIN | stripes:AXIS:PERIOD:DUTY")
    s.add_argument("--queries", type=int, default=0, help="also write a .pidx with this many query points")
    s.add_argument("--name", default="shape")
    s.add_argument("--out", required=True)
    common(s, workers=False)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("features", help="encode MuPS features of a cloud's query points")
    s.add_argument("--input", required=True)
    s.add_argument("--name", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--csv", help="also write a per-cell CSV export")
    s.add_argument("--normalize-extrema", action="store_true")
    encoding(s)
    common(s)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("estimate", help="estimate normals with a baseline or a trained model")
    s.add_argument("--input", required=True)
    s.add_argument("--name", required=True)
    s.add_argument("--method", choices=("pca", "jet", "moe"), default="pca")
    s.add_argument("--k", type=int, default=18)
    s.add_argument("--model")
    s.add_argument("--out", required=True)
    common(s)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("train", help="train the mixture of experts (synthetic corpus unless --data)")
    s.add_argument("--out", required=True)
    s.add_argument("--data", help="directory of PCPNet-format shapes with normals")
    s.add_argument("--shapes", type=lambda t: [m for m in t.split(",") if m], default=[])
    s.add_argument("--patches", type=int, default=2000, help="corpus size, or queries per shape with --data")
    s.add_argument("--expert-epochs", type=int, default=10, help="experts alone, gate frozen")
    s.add_argument("--head-epochs", type=int, default=10, help="gate output layer alone")
    s.add_argument("--joint-epochs", type=int, default=20)
    s.add_argument("--expert-lr", type=float, default=3e-3)
    s.add_argument("--head-lr", type=float, default=1e-3)
    s.add_argument("--joint-lr", type=float, default=2e-3)
    s.add_argument("--gate-lr-scale", type=float, default=0.03, help="gate step relative to experts, joint stage")
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--no-standardize", action="store_true", help="feed raw features to the networks")
    s.add_argument("--no-augment", action="store_true")
    s.add_argument("--noise", type=float, default=0.012)
    s.add_argument("--preset", choices=("tiny", "desk"), default="desk")
    encoding(s, tmax=256)
    common(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate methods or a predictions file")
    s.add_argument("--methods", type=lambda t: [m for m in t.split(",") if m], default=["pca_small"])
    s.add_argument("--model")
    s.add_argument("--data")
    s.add_argument("--shapes", type=lambda t: [m for m in t.split(",") if m], default=[])
    s.add_argument("--synthetic", type=lambda t: [m for m in t.split(",") if m], default=[])
    s.add_argument("--count", type=int, default=10_000)
    s.add_argument("--queries", type=int, default=1000)
    s.add_argument("--augment", action="append", default=[], help="'none' or a corruption spec; repeatable")
    s.add_argument("--predictions")
    s.add_argument("--out", required=True)
    common(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="encoding time over grid sizes and T_max")
    s.add_argument("--m", type=_ints, default=(2, 4, 8))
    s.add_argument("--tmax", type=_ints, default=(128, 256, 512))
    s.add_argument("--scales", type=_floats, default=(0.05, 0.07, 0.1))
    s.add_argument("--points", type=int, default=100_000)
    s.add_argument("--queries", type=int, default=60)
    s.add_argument("--repeats", type=int, default=2)
    s.add_argument("--size-check", action="store_true", help="also time 10k vs 100k point clouds")
    s.add_argument("--out", required=True)
    common(s)
    s.set_defaults(func=cmd_bench)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if hasattr(args, "workers"):
            args.workers = resolve_workers(args.workers)
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MupsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

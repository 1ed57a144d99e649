"""PCA and jet at three neighborhood sizes on synthetic shapes under each corruption.

With --pcpnet DIR the clean PCPNet test shapes are used instead.
"""

import argparse

from mups.data import NOISE_LEVELS, CorruptionSpec, ShapeSpec, generate
from mups.evaluation import Dataset, make_method, pcpnet_shapes, run_benchmark

import numpy as np


def synthetic(count, n_queries, seed):
    out = []
    for i, kind in enumerate(("plane", "sphere", "cylinder", "box", "wedge")):
        cloud = generate(ShapeSpec(kind, count=count, seed=seed + i))
        rng = np.random.default_rng(seed + i)
        out.append(Dataset(kind, cloud, np.sort(rng.choice(count, n_queries, replace=False))))
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--pcpnet")
    p.add_argument("--count", type=int, default=50_000)
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="baseline_table")
    args = p.parse_args()
    if args.pcpnet:
        from mups.data import load_pcpnet
        from pathlib import Path

        root = Path(args.pcpnet)
        datasets = [Dataset(s, *load_pcpnet(root, s)) for s in pcpnet_shapes(root)]
    else:
        datasets = synthetic(args.count, args.queries, args.seed)
    methods = [make_method(f"{m}_{s}") for m in ("pca", "jet") for s in ("small", "med", "large")]
    augs = [None] + [CorruptionSpec("gaussian_noise", sigma_fraction=s, seed=args.seed) for s in NOISE_LEVELS]
    augs += [CorruptionSpec.parse("stripes", seed=args.seed), CorruptionSpec.parse("gradient", seed=args.seed)]
    report = run_benchmark(methods, datasets, augs, workers=args.workers, seed=args.seed)
    labels = list(dict.fromkeys(r.augmentation for r in report.rows))
    print(f"{'method':<12}" + "".join(f"{a:>16}" for a in labels))
    for m in methods:
        print(f"{m.label:<12}" + "".join(f"{report.row(m.label, a).rms_deg:16.2f}" for a in labels))
    report.write(args.out)


if __name__ == "__main__":
    main()

"""Train the desk mixture and the single-scale baselines; print routing and errors."""

import argparse
import json

from mups.experiments import SpecializationConfig, run_specialization
from mups.moe import StagedSchedule


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--expert-epochs", type=int, default=10, help="experts alone, gate frozen")
    p.add_argument("--head-epochs", type=int, default=10, help="gate output layer alone")
    p.add_argument("--joint-epochs", type=int, default=20)
    p.add_argument("--patches", type=int, default=2000)
    p.add_argument("--per-shape", type=int, default=10, help="query patches drawn from each shape")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--json", help="write the full result here")
    args = p.parse_args()
    stages = StagedSchedule(
        expert_epochs=args.expert_epochs, head_epochs=args.head_epochs, joint_epochs=args.joint_epochs
    )
    cfg = SpecializationConfig(seed=args.seed, stages=stages, train_patches=args.patches,
                               patches_per_shape=args.per_shape, workers=args.workers)
    result = run_specialization(cfg, log=lambda s: print(s, flush=True))
    print(f"ratio to best single expert: {result.ratio:.3f} (target < 0.5)")
    print(f"crease queries on the smallest-scale expert: {result.crease_to_smallest:.3f} (target >= 0.7)")
    print(f"plane queries on the largest-scale expert: {result.plane_to_largest:.3f} (target >= 0.7)")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(result.summary(), fh, indent=2)


if __name__ == "__main__":
    main()

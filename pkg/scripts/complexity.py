"""Encoding time over grid size and T_max, plus the cloud-size check."""

import argparse
import csv
import sys

from mups.evaluation import cloud_size_timing, complexity_sweep, fit_linear


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="complexity.csv")
    p.add_argument("--repeats", type=int, default=2)
    args = p.parse_args()
    rows = complexity_sweep(repeats=args.repeats)
    a, b, r2 = fit_linear([r["k_times_t"] for r in rows], [r["ms_per_point"] for r in rows])
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    w = csv.writer(sys.stdout)
    for r in rows:
        w.writerow([r["m"], r["t_max"], f"{r['ms_per_point']:.3f}"])
    print(f"slope {a:.3e} ms per K*T_max, intercept {b:.3f} ms, R^2 {r2:.4f}")
    sizes = cloud_size_timing()
    print("ms/point by cloud size:", {k: round(v, 3) for k, v in sizes.items()})


if __name__ == "__main__":
    main()

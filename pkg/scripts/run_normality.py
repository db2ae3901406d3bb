"""Moments of the standardized statistics over setting-1 replications, plus a
KDE of T for d_1^2 against the standard normal density.

    python scripts/run_normality.py --reps 500 --kde results/kde_d2_1.csv
"""
import argparse
import warnings
from pathlib import Path

import numpy as np

from sofari.datagen import preset
from sofari.debias import SofariConfig
from sofari.errors import NonConvergenceWarning
from sofari.report import coverage_run, kde_csv, kde_export
from sofari.sofar import SofarConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--setting", type=int, default=1, choices=range(1, 6))
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variant", default="weak", choices=["strong", "weak", "split"])
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--component", default="d2_1", help="component whose KDE is exported")
    ap.add_argument("--kde", type=Path, help="write the KDE grid and density as CSV")
    args = ap.parse_args()

    cfg = SofariConfig(sofar=SofarConfig(rank=3), variant=args.variant, split_seed=args.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergenceWarning)
        res = coverage_run(preset(args.setting, seed=args.seed), cfg, args.reps, workers=args.workers)
    t = res.stats()
    labels = [c.label for c in res.components]
    print(f"{'component':<10} {'mean':>8} {'var':>8}")
    for lab, m, v in zip(labels, np.nanmean(t, axis=0), np.nanvar(t, axis=0, ddof=1)):
        print(f"{lab:<10} {m:>8.3f} {v:>8.3f}")
    grid, dens = kde_export(t[:, labels.index(args.component)], 601, -3.0, 3.0)
    sup = np.abs(dens - np.exp(-grid**2 / 2) / np.sqrt(2 * np.pi)).max()
    print(f"KDE sup deviation from N(0,1) on [-3, 3] for {args.component}: {sup:.4f}")
    if args.kde:
        args.kde.parent.mkdir(parents=True, exist_ok=True)
        args.kde.write_text(kde_csv(grid, dens))


if __name__ == "__main__":
    main()

"""Ablation grid plus the vanilla control, medians over seeds.

Thin wrapper around ``fallrep ablate`` that also prints the two directional
checks used for the ablation study.

    python3 scripts/ablation_grid.py --seeds 0,1,2 --out runs/ablation
"""
import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from fallrep.cli import main as cli


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--set", dest="overrides", action="append", default=[])
    args = ap.parse_args()
    argv = ["ablate", "--seeds", args.seeds, "--out", args.out]
    for o in args.overrides:
        argv += ["--set", o]
    status = cli(argv)
    if status:
        sys.exit(status)
    with open(Path(args.out) / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))

    def med(row, key):
        return float(np.median([float(r[key]) for r in rows if r["row"] == row]))

    drop = med("full", "spearman_rho") - med("no_denoising", "spearman_rho")
    print(f"\nrho drop without denoising: {drop:+.4f}")
    print(f"contact AUC window-only {med('window_only', 'contact_auc'):.4f} "
          f"vs continuation-only {med('continuation_only', 'contact_auc'):.4f}")


if __name__ == "__main__":
    main()

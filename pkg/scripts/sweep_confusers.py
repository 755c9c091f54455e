"""How the pharl/vanilla gap moves with confuser strength.

    python3 scripts/sweep_confusers.py --levels 0,0.25,0.5,0.75,1 --seed 0
"""
import argparse
from dataclasses import replace

from fallrep.pipeline import ABLATION_ROWS, run_row
from fallrep.synth import SynthConfig, generate
from fallrep.training import TrainConfig

ROWS = {r.name: r for r in ABLATION_ROWS}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--levels", default="0,0.25,0.5,0.75,1")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=100)
    args = ap.parse_args()
    train_cfg = TrainConfig(seed=args.seed, epochs=args.epochs, warmup_epochs=min(10, args.epochs))
    print(f"{'confuser':>9} {'rho pharl':>10} {'rho vanilla':>12} {'gap':>8}")
    for level in (float(x) for x in args.levels.split(",")):
        raw, _ = generate(SynthConfig(seed=args.seed, confuser_strength=level))
        p = run_row(raw, ROWS["full"], train_cfg).report.spearman_rho
        v = run_row(raw, ROWS["vanilla"], replace(train_cfg)).report.spearman_rho
        print(f"{level:>9.2f} {p:>10.4f} {v:>12.4f} {p - v:>+8.4f}", flush=True)


if __name__ == "__main__":
    main()

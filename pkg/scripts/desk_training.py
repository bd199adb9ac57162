"""Desk-scale training run: one variant at 64x64 on a procedural dataset.

Prints the first and last logged losses and writes losses.csv plus a
checkpoint under --out.

    python scripts/desk_training.py --steps 200 --lambda-bg 1e4 --out runs/desk
"""

import argparse
import time

import torch

from scu_cgan.data import synth_dataset
from scu_cgan.losses import LossBreakdown, LossWeights
from scu_cgan.trainer import VARIANTS, FlameConfig, TrainConfig, flame_patch_dataset, pretrain_flame_lsgan, split_records, train


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--records", type=int, default=32)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--variant", default="scu_cgan", choices=VARIANTS)
    p.add_argument("--lambda-bg", type=float, default=10.0)
    p.add_argument("--out", default="runs/desk")
    args = p.parse_args()
    torch.set_num_threads(1)

    nonfire, fire = split_records(synth_dataset(args.seed, args.records, (args.size, args.size)))
    t0 = time.perf_counter()
    flame = pretrain_flame_lsgan(flame_patch_dataset(64, args.seed), FlameConfig(seed=args.seed, epochs=25))
    cfg = TrainConfig(seed=args.seed, variant=args.variant, resolution=args.size, max_steps=args.steps,
                      epochs=10**6, weights=LossWeights(lambda_bg=args.lambda_bg))
    state, hist = train(cfg, nonfire, fire, out_dir=args.out, flame=flame)
    print(LossBreakdown.CSV_HEADER)
    print(hist[0].csv_row(0))
    print(hist[-1].csv_row(len(hist) - 1))
    print(f"{state.step} steps in {time.perf_counter() - t0:.0f}s; outputs in {args.out}")


if __name__ == "__main__":
    main()

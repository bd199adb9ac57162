"""Train and evaluate the six ablation variants on a procedural dataset.

Writes ablation_report.csv (variant,fid,kid,perceptual,iou) under --out.
Metrics use a frozen random feature extractor, so only the ordering between
rows is meaningful.

    python scripts/run_ablation.py --steps 300 --out runs/ablation
"""

import argparse

import torch

from scu_cgan.data import synth_dataset
from scu_cgan.trainer import FlameConfig, TrainConfig, flame_patch_dataset, pretrain_flame_lsgan, run_ablation, split_records


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-records", type=int, default=64)
    p.add_argument("--eval-records", type=int, default=64)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--out", default="runs/ablation")
    args = p.parse_args()
    torch.set_num_threads(1)

    size = (args.size, args.size)
    nonfire, fire = split_records(synth_dataset(args.seed, args.train_records, size))
    eval_nf, eval_f = split_records(synth_dataset(args.seed + 1, args.eval_records, size))
    flame = pretrain_flame_lsgan(flame_patch_dataset(64, args.seed), FlameConfig(seed=args.seed, epochs=25))
    cfg = TrainConfig(seed=args.seed, resolution=args.size, max_steps=args.steps, epochs=10**6)
    run_ablation(cfg, nonfire, fire, eval_nf, eval_f, flame=flame, out_dir=args.out)
    with open(f"{args.out}/ablation_report.csv") as fh:
        print(fh.read(), end="")


if __name__ == "__main__":
    main()

"""End-to-end augmentation smoke test through the command-line interface.

synth -> train -> generate -> mix -> detect-smoke, all under --out. The final
detection_report.csv compares a toy detector trained on the original fire
images against one trained on the mixed set.

    python scripts/augment_smoke.py --records 200 --steps 60 --out runs/smoke
"""

import argparse
import sys
from pathlib import Path

from scu_cgan.cli import main as cli
from scu_cgan.data import FIRE, load_dataset, save_dataset


def run(*argv):
    rc = cli([str(a) for a in argv])
    if rc:
        sys.exit(f"step {argv[0]} failed with exit code {rc}")


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--records", type=int, default=200)
    p.add_argument("--generate", type=int, default=200)
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--ratio", default="1:5")
    p.add_argument("--out", default="runs/smoke")
    args = p.parse_args()
    out = Path(args.out)

    run("synth", "--seed", args.seed, "--count", args.records, "--size", 64, "--out", out / "data")
    run("synth", "--seed", args.seed + 1, "--count", 40, "--size", 64, "--out", out / "test")
    run("train", "--seed", args.seed, "--data", out / "data", "--max-steps", args.steps, "--out", out / "train")
    run("generate", "--seed", args.seed, "--source", out / "data", "--checkpoint", out / "train" / "checkpoint",
        "--count", args.generate, "--out", out / "generated")
    fire = [r for r in load_dataset(out / "data") if r.domain == FIRE]
    save_dataset(fire, out / "original", seed=args.seed)
    run("mix", "--seed", args.seed, "--original", out / "original", "--generated", out / "generated",
        "--ratio", args.ratio, "--out", out / "mixed")
    run("detect-smoke", "--seed", args.seed, "--baseline", out / "original", "--augmented", out / "mixed",
        "--test", out / "test", "--out", out / "report")


if __name__ == "__main__":
    main()

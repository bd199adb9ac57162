"""Command-line entry point: ``scu-cgan <command> [flags]``.

Settings resolve as built-in defaults < ``SCU_SEED`` (seed only) <
``--config`` key=value file < explicit flags. The effective settings are
written to ``run_config.txt`` in every output directory.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical or
training error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import torch

from . import checkpoint as ckpt
from .errors import ConfigurationError, ScuError

log = logging.getLogger("scu_cgan")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(ConfigurationError):
    pass


def _ints(s: str) -> tuple:
    return tuple(int(p) for p in str(s).split(","))


def _ratio(s: str) -> tuple:
    parts = str(s).split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"ratio must look like A:B, got {s!r}")
    return (float(parts[0]), float(parts[1]))


def _common(p, out_required=True):
    p.add_argument("--config", default=None, help="key=value file of flag defaults")
    p.add_argument("--seed", type=int, default=None, help="random seed (falls back to $SCU_SEED, then 0)")
    p.add_argument("--out", required=out_required, default=None, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="torch CPU threads")
    p.add_argument("-v", "--verbose", action="store_true", default=False, help="log progress to stderr")


def _train_flags(p):
    from .trainer import VARIANTS

    p.add_argument("--variant", default="scu_cgan", choices=VARIANTS, help="ablation variant")
    p.add_argument("--epochs", type=int, default=1, help="passes over the larger domain")
    p.add_argument("--batch-size", type=int, default=1, help="pairs per step")
    p.add_argument("--max-steps", type=int, default=0, help="cap on total steps (0 = none)")
    p.add_argument("--lr-g", type=float, default=2e-4, help="generator learning rate")
    p.add_argument("--lr-d", type=float, default=2e-4, help="discriminator learning rate")
    p.add_argument("--lambda-cyc", type=float, default=10.0, help="cycle-consistency weight")
    p.add_argument("--lambda-id", type=float, default=5.0, help="identity weight")
    p.add_argument("--lambda-tr", type=float, default=1.0, help="target-region weight")
    p.add_argument("--lambda-bg", type=float, default=10.0, help="background weight")
    p.add_argument("--adv-form", default="least_squares", choices=("least_squares", "log"), help="adversarial loss form")
    p.add_argument("--noise-std", type=float, default=0.1, help="guidance noise std in [-1,1] units")
    p.add_argument("--widths", type=_ints, default=(32, 64, 128), help="U-Net level widths, comma separated")
    p.add_argument("--disc-widths", type=_ints, default=(32, 64, 128), help="discriminator widths")
    p.add_argument("--reduction", type=int, default=4, help="CBAM channel reduction ratio")
    p.add_argument("--checkpoint-every", type=int, default=0, help="extra checkpoint period in steps (0 = end only)")
    p.add_argument("--flame", default=None, help="frozen flame generator checkpoint (pre-trained if absent)")
    p.add_argument("--flame-epochs", type=int, default=25, help="flame pre-training epochs when --flame is absent")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="scu-cgan", description="Region-conditioned fire synthesis toolkit",
                                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a procedural dataset", formatter_class=fmt)
    _common(p)
    p.add_argument("--count", type=int, default=32, help="number of records")
    p.add_argument("--size", type=int, default=64, help="square image size (multiple of 8)")
    p.add_argument("--domain", default="both", choices=("both", "fire", "non_fire"), help="scene domain")

    p = sub.add_parser("pretrain-flame", help="pre-train and freeze the flame-patch LSGAN", formatter_class=fmt)
    _common(p)
    p.add_argument("--patches", type=int, default=64, help="procedural flame patches to train on")
    p.add_argument("--epochs", type=int, default=25, help="training epochs")
    p.add_argument("--batch-size", type=int, default=8, help="patches per step")
    p.add_argument("--lr", type=float, default=2e-4, help="learning rate")
    p.add_argument("--patch-size", type=int, default=16, help="patch side length")
    p.add_argument("--latent-dim", type=int, default=16, help="latent vector length")

    p = sub.add_parser("train", help="train one variant", formatter_class=fmt)
    _common(p)
    p.add_argument("--data", required=False, default=None, help="dataset directory holding both domains")
    p.add_argument("--resume", default=None, help="checkpoint directory to resume from")
    _train_flags(p)

    p = sub.add_parser("ablate", help="train and evaluate all six variants", formatter_class=fmt)
    _common(p)
    p.add_argument("--data", default=None, help="training dataset directory")
    p.add_argument("--eval-data", default=None, help="evaluation dataset directory (defaults to --data)")
    _train_flags(p)

    p = sub.add_parser("generate", help="export an augmented, labelled fire dataset", formatter_class=fmt)
    _common(p)
    p.add_argument("--source", default=None, help="dataset directory with non-fire records")
    p.add_argument("--checkpoint", default=None, help="training checkpoint directory")
    p.add_argument("--count", type=int, default=10, help="images to generate")

    p = sub.add_parser("mix", help="merge original and generated datasets", formatter_class=fmt)
    _common(p)
    p.add_argument("--original", default=None, help="original dataset directory")
    p.add_argument("--generated", default=None, help="generated dataset directory")
    p.add_argument("--ratio", type=_ratio, default=(1.0, 5.0), help="original:generated ratio")

    p = sub.add_parser("evaluate", help="image-set metrics or predictions-file scoring", formatter_class=fmt)
    _common(p, out_required=False)
    p.add_argument("--set-a", default=None, help="reference dataset directory")
    p.add_argument("--set-b", default=None, help="compared dataset directory")
    p.add_argument("--predictions", default=None, help="detections file to score")
    p.add_argument("--dataset", default=None, help="labelled dataset for --predictions")
    p.add_argument("--threshold", type=float, default=0.2, help="fire localisation threshold")
    p.add_argument("--conf", type=float, default=0.5, help="confidence cut for precision/recall")

    p = sub.add_parser("detect-smoke", help="toy detector on baseline vs augmented data", formatter_class=fmt)
    _common(p)
    p.add_argument("--baseline", default=None, help="original fire dataset directory")
    p.add_argument("--augmented", default=None, help="augmented dataset directory")
    p.add_argument("--test", default=None, help="held-out test dataset (defaults to --baseline)")
    p.add_argument("--steps", type=int, default=400, help="detector training steps")
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def resolve_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = _subparser(parser, args.command)
    by_dest = {a.dest: a for a in sub._actions if a.dest != "help"}
    explicit = _explicit_dests(sub, argv if argv is not None else sys.argv[1:])

    if args.seed is None and "SCU_SEED" in os.environ:
        try:
            args.seed = int(os.environ["SCU_SEED"])
        except ValueError:
            raise UsageError(f"SCU_SEED={os.environ['SCU_SEED']!r} is not an integer") from None
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} not found")
        for key, raw in ckpt.read_kv(path).items():
            dest = key.replace("-", "_")
            if dest not in by_dest or dest in ("config", "help"):
                raise UsageError(f"unknown config key {key!r} for command {args.command}")
            if dest in explicit:
                continue
            action = by_dest[dest]
            try:
                value = action.type(raw) if action.type else _plain(raw, action)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config key {key!r}: {value!r} not in {list(action.choices)}")
            setattr(args, dest, value)
    if args.seed is None:
        args.seed = 0
    return args


def _plain(raw, action):
    if isinstance(action.default, bool):
        return raw.strip().lower() in ("1", "true", "yes")
    return raw


def _explicit_dests(sub, argv) -> set:
    flags = {}
    for a in sub._actions:
        for s in a.option_strings:
            flags[s] = a.dest
    out = set()
    for tok in argv:
        name = tok.split("=", 1)[0]
        if name in flags:
            out.add(flags[name])
    return out


def _require(args, *names):
    for n in names:
        if getattr(args, n) in (None, ""):
            raise UsageError(f"--{n.replace('_', '-')} is required for {args.command}")


def _existing_dir(path, flag):
    p = Path(path)
    if not p.is_dir():
        raise FileNotFoundError(f"{flag}: directory {p} not found")
    return p


def _echo(args, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    items = {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "verbose", "threads", "out")}
    ckpt.write_kv(out / "run_config.txt", {k: ("none" if v is None else v) for k, v in items.items()})


def _train_config(args):
    from .losses import LossWeights
    from .trainer import TrainConfig

    return TrainConfig(
        seed=args.seed, epochs=args.epochs, batch_size=args.batch_size, lr_g=args.lr_g, lr_d=args.lr_d,
        weights=LossWeights(args.lambda_cyc, args.lambda_id, args.lambda_tr, args.lambda_bg),
        variant=args.variant, adv_form=args.adv_form, noise_std=args.noise_std, widths=args.widths,
        disc_widths=args.disc_widths, reduction=args.reduction, max_steps=args.max_steps,
        checkpoint_every=args.checkpoint_every,
    )


def _load_split(directory, flag):
    from .data import load_dataset
    from .trainer import split_records

    records = load_dataset(_existing_dir(directory, flag))
    nonfire, fire = split_records(records)
    if not fire:
        raise ConfigurationError(f"{flag}: dataset has no fire records")
    return records, nonfire, fire


def _flame(args, config):
    from .trainer import FlameConfig, flame_patch_dataset, pretrain_flame_lsgan

    if args.flame:
        module = ckpt.load_module(_existing_dir(args.flame, "--flame"))
        if not getattr(module, "frozen", False):
            raise ConfigurationError("--flame checkpoint is not a frozen flame generator")
        return module
    if not config.spec.translation:
        return None
    fc = FlameConfig(seed=args.seed, epochs=args.flame_epochs, size=config.patch_size, latent_dim=config.latent_dim)
    return pretrain_flame_lsgan(flame_patch_dataset(64, args.seed, fc.size), fc)


# ---------------------------------------------------------------- commands

def cmd_synth(args):
    from .data import save_dataset, synth_dataset

    out = Path(args.out)
    records = synth_dataset(args.seed, args.count, (args.size, args.size), args.domain)
    save_dataset(records, out, seed=args.seed)
    _echo(args, out)
    print(f"wrote {len(records)} records to {out}")


def cmd_pretrain_flame(args):
    from .trainer import FlameConfig, flame_patch_dataset, pretrain_flame_lsgan

    out = Path(args.out)
    fc = FlameConfig(seed=args.seed, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                     latent_dim=args.latent_dim, size=args.patch_size)
    module = pretrain_flame_lsgan(flame_patch_dataset(args.patches, args.seed, args.patch_size), fc)
    ckpt.save_module(module, out)
    _echo(args, out)
    print(f"frozen flame generator written to {out}")


def cmd_train(args):
    from .trainer import train

    out = Path(args.out)
    config = _train_config(args)
    if args.resume:
        _existing_dir(args.resume, "--resume")
    _require(args, "data")
    _, nonfire, fire = _load_split(args.data, "--data")
    config.resolution = fire[0].size[0]
    flame = None if args.resume else _flame(args, config)
    state, history = train(config, nonfire, fire, out_dir=out, flame=flame, resume_from=args.resume)
    _echo(args, out)
    print(f"trained {state.config.variant} for {state.step} steps; checkpoint at {out / 'checkpoint'}")


def cmd_ablate(args):
    from dataclasses import replace

    from .trainer import run_ablation

    _require(args, "data")
    out = Path(args.out)
    config = _train_config(args)
    _, nonfire, fire = _load_split(args.data, "--data")
    config.resolution = fire[0].size[0]
    eval_nf, eval_f = None, None
    if args.eval_data:
        _, eval_nf, eval_f = _load_split(args.eval_data, "--eval-data")
    flame = _flame(args, replace(config, variant="scu_cgan"))
    rows = run_ablation(config, nonfire, fire, eval_nf, eval_f, flame=flame, out_dir=out)
    _echo(args, out)
    print((out / "ablation_report.csv").read_text(), end="")
    return rows


def cmd_generate(args):
    from .augment import AugmentPlan, generate_augmented

    _require(args, "source", "checkpoint")
    plan = AugmentPlan(args.source, args.checkpoint, args.count, args.seed, args.out)
    out = generate_augmented(plan)
    _echo(args, out)
    print(f"wrote {args.count} generated fire records to {out}")


def cmd_mix(args):
    from .augment import mix_datasets, provenance_counts

    _require(args, "original", "generated")
    _existing_dir(args.original, "--original")
    _existing_dir(args.generated, "--generated")
    out = mix_datasets(args.original, args.generated, args.ratio, args.seed, args.out)
    _echo(args, out)
    print(f"merged dataset at {out}: {provenance_counts(out)}")


def cmd_evaluate(args):
    from .metrics import evaluate_dirs, score_predictions_file

    if args.predictions:
        _require(args, "dataset")
        if not Path(args.predictions).exists():
            raise FileNotFoundError(f"--predictions: {args.predictions} not found")
        report = score_predictions_file(args.predictions, _existing_dir(args.dataset, "--dataset"), args.conf)
    else:
        _require(args, "set_a", "set_b")
        report = evaluate_dirs(_existing_dir(args.set_a, "--set-a"), _existing_dir(args.set_b, "--set-b"),
                               threshold=args.threshold)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        keys = list(report.present())
        (out / "metrics.csv").write_text(",".join(keys) + "\n" + report.csv(keys) + "\n")
        (out / "metrics.txt").write_text(report.text() + "\n")
        _echo(args, out)
    print(report.text())
    return report


def cmd_detect_smoke(args):
    from .augment import toy_detector_train_eval

    _require(args, "baseline", "augmented")
    base = _existing_dir(args.baseline, "--baseline")
    aug = _existing_dir(args.augmented, "--augmented")
    test = _existing_dir(args.test, "--test") if args.test else base
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys = ["precision", "recall", "map50", "map5095"]
    rows = [("baseline", toy_detector_train_eval(base, test, args.seed, args.steps)),
            ("augmented", toy_detector_train_eval(aug, test, args.seed, args.steps))]
    text = "model," + ",".join(keys) + "\n" + "".join(r.csv(keys, label=name) + "\n" for name, r in rows)
    (out / "detection_report.csv").write_text(text)
    _echo(args, out)
    print(text, end="")
    return rows


COMMANDS = {
    "synth": cmd_synth,
    "pretrain-flame": cmd_pretrain_flame,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "generate": cmd_generate,
    "mix": cmd_mix,
    "evaluate": cmd_evaluate,
    "detect-smoke": cmd_detect_smoke,
}


def main(argv=None) -> int:
    try:
        args = resolve_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except ConfigurationError as exc:
        print(f"scu-cgan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    torch.set_num_threads(max(1, args.threads))
    try:
        COMMANDS[args.command](args)
    except ScuError as exc:
        print(f"scu-cgan {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC) else EXIT_DATA
    except (FileNotFoundError, ValueError) as exc:
        print(f"scu-cgan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ArithmeticError as exc:
        print(f"scu-cgan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())

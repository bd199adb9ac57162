"""Flame pre-training, adversarial training of the six ablation variants, checkpoints."""

from __future__ import annotations

import logging
import math
from dataclasses import MISSING, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from . import checkpoint as ckpt
from .data import FIRE, NON_FIRE, synth_flame_patch
from .discriminators import PatchDiscriminator, RegionDiscriminator
from .errors import ConfigurationError, LoadError, TrainingDivergenceError
from .generator import (FlameGenerator, LatentGenerator, ResnetGenerator, UNetGenerator,
                        compose_six_channel, flame_generate, neutral_patch)
from .losses import (FAKE, REAL, LossBreakdown, LossWeights, adversarial, background_loss, l1,
                     total_discriminator_loss, total_generator_loss)
from .ops import crop_batch, crop_region, mask_tensor, param_hash

log = logging.getLogger(__name__)

VARIANTS = (
    "lsgan_only",
    "cyclegan",
    "cyclegan_unet",
    "cyclegan_unet_cbam",
    "cyclegan_unet_bg_tr",
    "scu_cgan",
)

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class VariantSpec:
    generator: str  # latent | resnet | unet
    cbam: bool = False
    region_losses: bool = False

    @property
    def translation(self):
        return self.generator != "latent"


VARIANT_SPECS = {
    "lsgan_only": VariantSpec("latent"),
    "cyclegan": VariantSpec("resnet"),
    "cyclegan_unet": VariantSpec("unet"),
    "cyclegan_unet_cbam": VariantSpec("unet", cbam=True),
    "cyclegan_unet_bg_tr": VariantSpec("unet", region_losses=True),
    "scu_cgan": VariantSpec("unet", cbam=True, region_losses=True),
}


@dataclass
class FlameConfig:
    seed: int = 0
    epochs: int = 2
    batch_size: int = 8
    lr: float = 2e-4
    latent_dim: int = 16
    size: int = 16
    base: int = 64
    disc_widths: tuple = (32, 64, 128)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigurationError("flame config needs epochs >= 1, batch_size >= 1, lr > 0")


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 1
    batch_size: int = 1
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    weights: LossWeights = field(default_factory=LossWeights)
    variant: str = "scu_cgan"
    resolution: int = 64
    adv_form: str = "least_squares"
    noise_std: float = 0.1
    blend: float = 1.0
    widths: tuple = (32, 64, 128)
    reduction: int = 4
    attn_kernel: int = 7
    resnet_base: int = 32
    resnet_blocks: int = 3
    disc_widths: tuple = (32, 64, 128)
    crop_size: int = 32
    patch_size: int = 16
    latent_dim: int = 16
    lsgan_latent_dim: int = 64
    max_steps: int = 0  # 0 = no cap
    checkpoint_every: int = 0  # 0 = only at the end

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigurationError("learning rates must be > 0")
        if self.variant not in VARIANT_SPECS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.adv_form not in ("least_squares", "log"):
            raise ConfigurationError(f"unknown adv_form {self.adv_form!r}")
        if self.noise_std < 0:
            raise ConfigurationError("noise_std must be >= 0")
        self.widths = tuple(self.widths)
        self.disc_widths = tuple(self.disc_widths)

    @property
    def spec(self) -> VariantSpec:
        return VARIANT_SPECS[self.variant]

    def to_kv(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, LossWeights):
                out.update({k.name: getattr(v, k.name) for k in fields(v)})
            else:
                out[f.name] = v
        return out

    @classmethod
    def from_kv(cls, items: dict) -> "TrainConfig":
        """Build from key=value strings (or parsed values); unknown keys are rejected."""
        items = {k: ckpt.parse_value(v) if isinstance(v, str) else v for k, v in items.items()}
        weight_keys = {f.name for f in fields(LossWeights)}
        own = {f.name: f for f in fields(cls)}
        kw, wkw = {}, {}
        for k, v in items.items():
            if k in weight_keys:
                wkw[k] = float(v)
            elif k in own and k != "weights":
                kw[k] = _coerce(own[k], v)
            else:
                raise ConfigurationError(f"unknown config key {k!r}")
        return cls(weights=LossWeights(**wkw), **kw)


def _coerce(f, v):
    default = None if f.default is MISSING else f.default
    if isinstance(default, bool):
        return bool(v)
    if isinstance(default, int):
        return int(v)
    if isinstance(default, float):
        return float(v)
    if isinstance(default, tuple):
        return tuple(int(x) for x in (v if isinstance(v, tuple) else (v,)))
    return v


# ------------------------------------------------------------------ state

class TrainState:
    """Models, optimizers and the global step of one training run."""

    def __init__(self, config: TrainConfig, models: dict, step: int = 0):
        self.config = config
        self.models = models
        self.step = step
        spec = config.spec
        gen_names = ["g_nf2f", "g_f2nf"] if spec.translation else ["g_nf2f"]
        disc_names = ["d_f"]
        if spec.translation:
            disc_names.append("d_nf")
        if spec.region_losses:
            disc_names += ["d_fr", "d_nfr"]
        self.gen_names, self.disc_names = gen_names, disc_names
        betas = (config.beta1, config.beta2)
        self.opt_g = torch.optim.Adam(self._params(gen_names), lr=config.lr_g, betas=betas)
        self.opt_d = torch.optim.Adam(self._params(disc_names), lr=config.lr_d, betas=betas)

    def _params(self, names):
        return [p for n in names for p in self.models[n].parameters()]

    def named_params(self, names):
        return [(f"{n}.{pn}", p) for n in names for pn, p in self.models[n].named_parameters()]

    @property
    def flame(self):
        return self.models.get("flame")

    def hash(self) -> str:
        return ckpt_hash(self.models)


def ckpt_hash(models: dict) -> str:
    import hashlib

    h = hashlib.sha256()
    for name in sorted(models):
        h.update(name.encode())
        h.update(param_hash(models[name]).encode())
    return h.hexdigest()


def build_models(config: TrainConfig, flame: FlameGenerator | None = None) -> dict:
    spec = config.spec
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        models = {}
        if spec.generator == "latent":
            models["g_nf2f"] = LatentGenerator(config.lsgan_latent_dim, config.resolution)
        else:
            for name in ("g_nf2f", "g_f2nf"):
                if spec.generator == "unet":
                    models[name] = UNetGenerator(widths=config.widths, use_cbam=spec.cbam,
                                                 reduction=config.reduction, attn_kernel=config.attn_kernel)
                else:
                    models[name] = ResnetGenerator(base=config.resnet_base, n_blocks=config.resnet_blocks)
        models["d_f"] = PatchDiscriminator(widths=config.disc_widths)
        if spec.translation:
            models["d_nf"] = PatchDiscriminator(widths=config.disc_widths)
        if spec.region_losses:
            models["d_fr"] = RegionDiscriminator(widths=config.disc_widths, crop_size=config.crop_size)
            models["d_nfr"] = RegionDiscriminator(widths=config.disc_widths, crop_size=config.crop_size)
    if spec.translation:
        if flame is None:
            raise ConfigurationError("translation variants need a pre-trained flame generator")
        if not flame.frozen:
            raise ConfigurationError("flame generator must be frozen before translation training")
        models["flame"] = flame
    return models


def init_state(config: TrainConfig, flame: FlameGenerator | None = None) -> TrainState:
    return TrainState(config, build_models(config, flame))


# --------------------------------------------------------- flame pretrain

def flame_patch_dataset(count: int, seed: int = 0, size: int = 16) -> list[np.ndarray]:
    return [synth_flame_patch(seed * 1_000_003 + i, (size, size)) for i in range(count)]


def pretrain_flame_lsgan(patches, config: FlameConfig | None = None, history: list | None = None) -> FlameGenerator:
    """Least-squares GAN on flame patches; returns the generator frozen.

    If ``history`` is given, one dict per step is appended with the
    discriminator's real/fake terms and the generator loss.
    """
    config = config or FlameConfig()
    if len(patches) < 16:
        raise ConfigurationError(f"flame pre-training needs >= 16 patches, got {len(patches)}")
    data = torch.from_numpy(np.stack(patches).astype(np.float32))
    if data.shape[-1] != config.size:
        data = torch.stack([crop_region(p, _full_box(p), (config.size, config.size)) for p in data])
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        gen = FlameGenerator(config.latent_dim, config.size, config.base)
        disc = RegionDiscriminator(widths=config.disc_widths, crop_size=config.size, norm=False)
    opt_g = torch.optim.Adam(gen.parameters(), lr=config.lr, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr, betas=(0.5, 0.999))

    n = data.shape[0]
    steps_per_epoch = max(1, n // config.batch_size)
    step = 0
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch, 0xF1]).permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            real = data[idx]
            z = torch.from_numpy(np.random.default_rng([config.seed, step, 0xF2])
                                 .standard_normal((len(idx), config.latent_dim)).astype(np.float32))
            fake = gen(z)

            d_real = adversarial(disc(real), REAL)
            d_fake = adversarial(disc(fake.detach()), FAKE)
            opt_d.zero_grad(set_to_none=True)
            (d_real + d_fake).backward()
            opt_d.step()

            g_loss = adversarial(disc(fake), REAL)
            opt_g.zero_grad(set_to_none=True)
            g_loss.backward()
            opt_g.step()

            values = {"d_real": d_real.item(), "d_fake": d_fake.item(), "g": g_loss.item()}
            for k, v in values.items():
                if not math.isfinite(v) or abs(v) > DIVERGENCE_LIMIT:
                    raise TrainingDivergenceError(step, f"flame.{k}", v)
            if history is not None:
                history.append(values)
            step += 1
    return gen.freeze()


def _full_box(p):
    from .data import RegionBox

    return RegionBox(0, 0, p.shape[-1], p.shape[-2])


# ---------------------------------------------------------------- batches

def batch_for_step(step: int, nonfire, fire, config: TrainConfig):
    """Deterministic (non-fire, fire) record pairs for a global step."""
    n = max(len(nonfire), len(fire))
    per_epoch = max(1, n // config.batch_size)
    epoch, b = divmod(step, per_epoch)
    perm_nf = np.random.default_rng([config.seed, epoch, 1]).permutation(len(nonfire))
    perm_f = np.random.default_rng([config.seed, epoch, 2]).permutation(len(fire))
    pairs = []
    for k in range(b * config.batch_size, (b + 1) * config.batch_size):
        pairs.append((nonfire[perm_nf[k % len(nonfire)]], fire[perm_f[k % len(fire)]]))
    return pairs


def steps_per_epoch(nonfire, fire, config: TrainConfig) -> int:
    return max(1, max(len(nonfire), len(fire)) // config.batch_size)


def total_steps(nonfire, fire, config: TrainConfig) -> int:
    n = config.epochs * steps_per_epoch(nonfire, fire, config)
    return min(n, config.max_steps) if config.max_steps else n


def compose_batch(images, boxes, patches, noise_std, seeds, blend=1.0):
    return torch.stack([compose_six_channel(img, b, p, noise_std, int(s), blend)
                        for img, b, p, s in zip(images, boxes, patches, seeds)])


def sample_flame_patches(flame: FlameGenerator, rng: np.random.Generator, count: int) -> torch.Tensor:
    z = rng.standard_normal((count, flame.latent_dim)).astype(np.float32)
    with torch.no_grad():
        return flame_generate(z, flame)


# ------------------------------------------------------------- train step

def _check(step, values: dict):
    for name, v in values.items():
        if not math.isfinite(v) or abs(v) > DIVERGENCE_LIMIT:
            raise TrainingDivergenceError(step, name, v)


def _set_requires_grad(modules, flag):
    for m in modules:
        m.requires_grad_(flag)


def train_step(batch, state: TrainState):
    """One generator update followed by one update of every active discriminator.

    Returns (state, LossBreakdown); the breakdown holds the losses computed
    before the update.
    """
    cfg, spec, m = state.config, state.config.spec, state.models
    form = cfg.adv_form
    rng = np.random.default_rng([cfg.seed, state.step, 7])
    B = len(batch)
    x_nf = torch.from_numpy(np.stack([nf.image for nf, _ in batch]))
    x_f = torch.from_numpy(np.stack([f.image for _, f in batch]))
    box_nf = [nf.target_box for nf, _ in batch]
    box_f = [f.boxes[0] for _, f in batch]
    discs = [m[n] for n in state.disc_names]
    for mod in list(m.values()):
        if mod is not m.get("flame"):
            mod.train()

    zero = torch.zeros(())
    comps = dict(adv_g=zero, cyc=zero, id=zero, tr_g=zero, bg=zero)

    _set_requires_grad(discs, False)
    if not spec.translation:
        z = torch.from_numpy(rng.standard_normal((B, cfg.lsgan_latent_dim)).astype(np.float32))
        fake_f = m["g_nf2f"](z)
        comps["adv_g"] = adversarial(m["d_f"](fake_f), REAL, form)
    else:
        seeds = rng.integers(0, 2**62, size=(6, B))
        p = cfg.patch_size
        flames = sample_flame_patches(m["flame"], rng, B)
        g_nf2f, g_f2nf = m["g_nf2f"], m["g_f2nf"]

        in_nf = compose_batch(x_nf, box_nf, flames, cfg.noise_std, seeds[0], cfg.blend)
        fake_f = g_nf2f(in_nf)
        neutral_f = [neutral_patch(x, b, p) for x, b in zip(x_f, box_f)]
        in_f = compose_batch(x_f, box_f, neutral_f, cfg.noise_std, seeds[1], cfg.blend)
        fake_nf = g_f2nf(in_f)

        comps["adv_g"] = (adversarial(m["d_f"](fake_f), REAL, form)
                          + adversarial(m["d_nf"](fake_nf), REAL, form))

        neutral_fake = [neutral_patch(x, b, p) for x, b in zip(fake_f.detach(), box_nf)]
        rec_nf = g_f2nf(compose_batch(fake_f, box_nf, neutral_fake, cfg.noise_std, seeds[2], cfg.blend))
        rec_f = g_nf2f(compose_batch(fake_nf, box_f, flames, cfg.noise_std, seeds[3], cfg.blend))
        comps["cyc"] = l1(rec_nf, x_nf) + l1(rec_f, x_f)

        own_f = crop_batch(x_f, box_f, (p, p))
        own_nf = crop_batch(x_nf, box_nf, (p, p))
        idt_f = g_nf2f(compose_batch(x_f, box_f, own_f, cfg.noise_std, seeds[4], cfg.blend))
        idt_nf = g_f2nf(compose_batch(x_nf, box_nf, own_nf, cfg.noise_std, seeds[5], cfg.blend))
        comps["id"] = l1(idt_f, x_f) + l1(idt_nf, x_nf)

        if spec.region_losses:
            crop = (cfg.crop_size, cfg.crop_size)
            comps["tr_g"] = (adversarial(m["d_fr"](crop_batch(fake_f, box_nf, crop)), REAL, form)
                             + adversarial(m["d_nfr"](crop_batch(fake_nf, box_f, crop)), REAL, form))
            size = tuple(x_nf.shape[-2:])
            mask_nf = torch.stack([mask_tensor(b, size) for b in box_nf])
            mask_f = torch.stack([mask_tensor(b, size) for b in box_f])
            comps["bg"] = background_loss(fake_f, x_nf, mask_nf) + background_loss(fake_nf, x_f, mask_f)

    parts = LossBreakdown(**comps)
    total_g = total_generator_loss(parts, cfg.weights)
    _check(state.step, {k: v.item() for k, v in comps.items()} | {"total_g": total_g.item()})
    state.opt_g.zero_grad(set_to_none=True)
    total_g.backward()
    state.opt_g.step()
    _set_requires_grad(discs, True)

    # discriminators
    adv_d = adversarial(m["d_f"](x_f), REAL, form) + adversarial(m["d_f"](fake_f.detach()), FAKE, form)
    tr_d = zero
    if spec.translation:
        adv_d = adv_d + adversarial(m["d_nf"](x_nf), REAL, form) + adversarial(m["d_nf"](fake_nf.detach()), FAKE, form)
    if spec.region_losses:
        crop = (cfg.crop_size, cfg.crop_size)
        tr_d = (adversarial(m["d_fr"](crop_batch(x_f, box_f, crop)), REAL, form)
                + adversarial(m["d_fr"](crop_batch(fake_f.detach(), box_nf, crop)), FAKE, form)
                + adversarial(m["d_nfr"](crop_batch(x_nf, box_nf, crop)), REAL, form)
                + adversarial(m["d_nfr"](crop_batch(fake_nf.detach(), box_f, crop)), FAKE, form))
    parts.adv_d, parts.tr_d = adv_d, tr_d
    total_d = total_discriminator_loss(parts)
    _check(state.step, {"adv_d": adv_d.item(), "tr_d": tr_d.item(), "total_d": total_d.item()})
    state.opt_d.zero_grad(set_to_none=True)
    total_d.backward()
    state.opt_d.step()

    out = LossBreakdown(**{f.name: getattr(parts, f.name).item() for f in fields(LossBreakdown)
                           if f.name not in ("total_g", "total_d")})
    out.total_g = total_g.item()
    out.total_d = total_d.item()
    state.step += 1
    return state, out


# ------------------------------------------------------------ checkpoints

def save_checkpoint(state: TrainState, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ckpt.write_kv(directory / "manifest.txt", {"step": state.step, "models": ",".join(sorted(state.models)),
                                               **state.config.to_kv()})
    for name, module in state.models.items():
        ckpt.save_module(module, directory / name)
    for tag, opt, names in (("optim_g", state.opt_g, state.gen_names), ("optim_d", state.opt_d, state.disc_names)):
        _save_adam(opt, state.named_params(names), directory / tag)


def _save_adam(opt, named, directory):
    directory.mkdir(parents=True, exist_ok=True)
    steps = {}
    for name, p in named:
        st = opt.state.get(p)
        if not st:
            continue
        steps[f"{name}.step"] = int(st["step"].item())
        ckpt.write_tensor(directory / f"{name}.exp_avg", st["exp_avg"])
        ckpt.write_tensor(directory / f"{name}.exp_avg_sq", st["exp_avg_sq"])
    ckpt.write_kv(directory / "manifest.txt", steps)


def _load_adam(opt, named, directory):
    steps = ckpt.read_kv(directory / "manifest.txt")
    for name, p in named:
        key = f"{name}.step"
        if key not in steps:
            continue
        opt.state[p] = {
            "step": torch.tensor(float(steps[key])),
            "exp_avg": ckpt.read_tensor(directory / f"{name}.exp_avg", p),
            "exp_avg_sq": ckpt.read_tensor(directory / f"{name}.exp_avg_sq", p),
        }


def load_checkpoint(directory) -> TrainState:
    directory = Path(directory)
    if not (directory / "manifest.txt").exists():
        raise LoadError(f"no checkpoint at {directory}")
    raw = ckpt.read_kv(directory / "manifest.txt")
    step = int(raw.pop("step"))
    names = raw.pop("models").split(",")
    config = TrainConfig.from_kv(raw)
    models = {name: ckpt.load_module(directory / name) for name in names}
    state = TrainState(config, models, step)
    _load_adam(state.opt_g, state.named_params(state.gen_names), directory / "optim_g")
    _load_adam(state.opt_d, state.named_params(state.disc_names), directory / "optim_d")
    return state


def load_generator(directory, name="g_nf2f"):
    """(generator, flame generator, config) from a training checkpoint."""
    directory = Path(directory)
    if not (directory / "manifest.txt").exists():
        raise LoadError(f"no checkpoint at {directory}")
    config = TrainConfig.from_kv({k: v for k, v in ckpt.read_kv(directory / "manifest.txt").items()
                                  if k not in ("step", "models")})
    gen = ckpt.load_module(directory / name)
    flame = ckpt.load_module(directory / "flame") if (directory / "flame").exists() else None
    return gen, flame, config


# ------------------------------------------------------------------ train

def train(config: TrainConfig, nonfire, fire, out_dir=None, flame=None, resume_from=None,
          flame_config: FlameConfig | None = None, on_step=None):
    """Run the training loop; returns (state, list of LossBreakdown).

    With ``out_dir`` a ``losses.csv`` log and a ``checkpoint/`` directory
    are written (plus ``checkpoint_<step>/`` every ``checkpoint_every`` steps).
    """
    if not fire or (config.spec.translation and not nonfire):
        raise ConfigurationError("training needs non-empty fire and non-fire record lists")
    if resume_from is not None:
        state = load_checkpoint(resume_from)
        state.config.max_steps = config.max_steps
        state.config.epochs = config.epochs
    else:
        if config.spec.translation and flame is None:
            fc = flame_config or FlameConfig(seed=config.seed, size=config.patch_size,
                                             latent_dim=config.latent_dim)
            flame = pretrain_flame_lsgan(flame_patch_dataset(64, config.seed, fc.size), fc)
        state = init_state(config, flame)
    nonfire = nonfire or fire  # lsgan_only samples only from the fire domain
    cfg = state.config
    n_steps = total_steps(nonfire, fire, cfg)
    history = []
    csv = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        mode = "a" if resume_from is not None and (out_dir / "losses.csv").exists() else "w"
        csv = open(out_dir / "losses.csv", mode)
        if mode == "w":
            csv.write(LossBreakdown.CSV_HEADER + "\n")
    try:
        while state.step < n_steps:
            step = state.step
            _, losses = train_step(batch_for_step(step, nonfire, fire, cfg), state)
            history.append(losses)
            if csv:
                csv.write(losses.csv_row(step) + "\n")
            if on_step:
                on_step(step, losses)
            if out_dir is not None and cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
                save_checkpoint(state, out_dir / f"checkpoint_{state.step:06d}")
    finally:
        if csv:
            csv.close()
    if out_dir is not None:
        save_checkpoint(state, out_dir / "checkpoint")
    return state, history


# -------------------------------------------------------------- inference

@torch.no_grad()
def translate_nonfire(generator: nn.Module, flame: FlameGenerator, image, box, seed: int,
                      noise_std: float = 0.1, blend: float = 1.0) -> np.ndarray:
    """Non-fire image -> fire image via the 6-channel input; float32 [3,H,W]."""
    generator.eval()
    rng = np.random.default_rng([int(seed), 0xA6])
    patch = sample_flame_patches(flame, rng, 1)[0]
    x6 = compose_six_channel(image, box, patch, noise_std, int(rng.integers(0, 2**62)), blend)
    return generator(x6[None])[0].numpy().astype(np.float32)


@torch.no_grad()
def sample_latent(generator: LatentGenerator, count: int, seed: int) -> np.ndarray:
    generator.eval()
    z = np.random.default_rng([int(seed), 0xB7]).standard_normal((count, generator.latent_dim))
    return generator(torch.from_numpy(z.astype(np.float32))).numpy()


def split_records(records):
    nonfire = [r for r in records if r.domain == NON_FIRE and r.boxes]
    fire = [r for r in records if r.domain == FIRE]
    return nonfire, fire


# --------------------------------------------------------------- ablation

ABLATION_HEADER = "variant,fid,kid,perceptual,iou"


@dataclass
class AblationRow:
    variant: str
    state: TrainState
    report: object  # metrics.MetricReport


def evaluate_state(state: TrainState, nonfire, fire, extractor=None, seed: int = 0):
    """Table-1-shaped report for one trained variant."""
    from .metrics import generation_report

    cfg = state.config
    sources = np.stack([r.image for r in nonfire])
    reals = np.stack([r.image for r in fire])
    gen = state.models["g_nf2f"]
    if cfg.spec.translation:
        fakes = np.stack([translate_nonfire(gen, state.flame, r.image, r.target_box, seed * 1_000_003 + i,
                                            cfg.noise_std, cfg.blend)
                          for i, r in enumerate(nonfire)])
        boxes = [r.target_box for r in nonfire]
    else:
        fakes = sample_latent(gen, len(nonfire), seed)
        boxes = None  # no designated region: IoU is undefined for the unconditional baseline
    return generation_report(fakes, sources, reals, boxes, extractor)


def run_ablation(base_config: TrainConfig, nonfire, fire, eval_nonfire=None, eval_fire=None,
                 flame=None, out_dir=None, extractor=None, variants=VARIANTS):
    """Train and evaluate every variant with the same seed and data."""
    from dataclasses import replace

    if flame is None:
        fc = FlameConfig(seed=base_config.seed, size=base_config.patch_size, latent_dim=base_config.latent_dim)
        flame = pretrain_flame_lsgan(flame_patch_dataset(64, base_config.seed, fc.size), fc)
    eval_nonfire = eval_nonfire or nonfire
    eval_fire = eval_fire or fire
    rows = []
    for variant in variants:
        cfg = replace(base_config, variant=variant)
        vdir = Path(out_dir) / variant if out_dir is not None else None
        state, _ = train(cfg, nonfire, fire, out_dir=vdir, flame=flame)
        report = evaluate_state(state, eval_nonfire, eval_fire, extractor, base_config.seed)
        log.info("%s: %s", variant, report.present())
        rows.append(AblationRow(variant, state, report))
    if out_dir is not None:
        write_ablation_report(rows, Path(out_dir) / "ablation_report.csv")
    return rows


def write_ablation_report(rows, path) -> None:
    lines = [ABLATION_HEADER] + [r.report.csv(["fid", "kid", "perceptual", "iou"], label=r.variant) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")

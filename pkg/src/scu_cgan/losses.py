"""Adversarial, cycle, identity, target-region and background losses."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, DimensionError
from .ops import as_tensor

REAL, FAKE = 1.0, 0.0
ADV_FORMS = ("least_squares", "log")


@dataclass
class LossWeights:
    lambda_cyc: float = 10.0
    lambda_id: float = 5.0
    lambda_tr: float = 1.0
    lambda_bg: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigurationError(f"{f.name} must be >= 0")


@dataclass
class LossBreakdown:
    adv_g: float = 0.0
    adv_d: float = 0.0
    cyc: float = 0.0
    id: float = 0.0
    tr_g: float = 0.0
    tr_d: float = 0.0
    bg: float = 0.0
    total_g: float = 0.0
    total_d: float = 0.0

    CSV_HEADER = "step,adv_g,adv_d,cyc,id,tr_g,tr_d,bg,total_g,total_d"

    def as_dict(self):
        return asdict(self)

    def csv_row(self, step: int) -> str:
        return ",".join([str(step)] + [repr(float(v)) for v in asdict(self).values()])


def adversarial_ls(scores, target: float) -> torch.Tensor:
    """Least-squares adversarial loss: mean((score - target)^2)."""
    scores = as_tensor(scores)
    return ((scores - target) ** 2).mean()


def adversarial_log(scores, target: float) -> torch.Tensor:
    """Minimax log loss on raw scores treated as logits."""
    scores = as_tensor(scores)
    return F.binary_cross_entropy_with_logits(scores, torch.full_like(scores, target))


def adversarial(scores, target: float, form: str = "least_squares") -> torch.Tensor:
    if form == "least_squares":
        return adversarial_ls(scores, target)
    if form == "log":
        return adversarial_log(scores, target)
    raise ConfigurationError(f"adv_form must be one of {ADV_FORMS}, got {form!r}")


def target_region_loss_d(real_crop_scores, fake_crop_scores, form="least_squares"):
    return adversarial(real_crop_scores, REAL, form) + adversarial(fake_crop_scores, FAKE, form)


def target_region_loss_g(fake_crop_scores, form="least_squares"):
    return adversarial(fake_crop_scores, REAL, form)


def _same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def background_loss(generated, original, mask) -> torch.Tensor:
    """L1 between generated and original outside the box, averaged over every element.

    ``mask`` is [1,H,W] (or [N,1,H,W]) with ones on the target box.
    """
    generated, original = as_tensor(generated), as_tensor(original)
    mask = as_tensor(mask, generated.dtype)
    _same_shape(generated, original)
    if mask.shape[-2:] != generated.shape[-2:]:
        raise DimensionError(f"mask {tuple(mask.shape)} does not match image {tuple(generated.shape)}")
    keep = 1 - mask
    return (keep * generated - keep * original).abs().mean()


def l1(a, b) -> torch.Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b)
    return (a - b).abs().mean()


cycle_loss = l1
identity_loss = l1


def total_generator_loss(components: LossBreakdown, weights: LossWeights) -> float:
    c, w = components, weights
    return (c.adv_g + w.lambda_cyc * c.cyc + w.lambda_id * c.id
            + w.lambda_tr * c.tr_g + w.lambda_bg * c.bg)


def total_discriminator_loss(components: LossBreakdown) -> float:
    return components.adv_d + components.tr_d

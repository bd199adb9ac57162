"""Small tensor helpers shared by the model modules."""

from __future__ import annotations

import hashlib

import numpy as np
import torch
import torch.nn.functional as F

from .data import RegionBox
from .errors import DimensionError


def as_tensor(x, dtype=None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x if dtype is None else x.to(dtype)
    return torch.from_numpy(np.ascontiguousarray(x)).to(dtype or torch.float32)


def batched(x: torch.Tensor):
    """Return (x with a batch axis, whether one was added)."""
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise DimensionError(f"expected [C,H,W] or [N,C,H,W], got {tuple(x.shape)}")


def resize_bilinear(x: torch.Tensor, size) -> torch.Tensor:
    """Bilinear resize with half-pixel centres (edge samples clamped)."""
    xb, squeeze = batched(x)
    if tuple(xb.shape[-2:]) != tuple(size):
        xb = F.interpolate(xb, size=tuple(size), mode="bilinear", align_corners=False)
    return xb[0] if squeeze else xb


def crop_region(image, box: RegionBox, out=(32, 32)) -> torch.Tensor:
    """Crop ``box`` from a [3,H,W] (or batched) image and resize to ``out``."""
    image = as_tensor(image)
    box.check_within(tuple(image.shape[-2:]))
    crop = image[..., box.y_min:box.y_max, box.x_min:box.x_max]
    return resize_bilinear(crop, out)


def crop_batch(images: torch.Tensor, boxes, out=(32, 32)) -> torch.Tensor:
    return torch.stack([crop_region(img, b, out) for img, b in zip(images, boxes)])


def mask_tensor(box: RegionBox, size, dtype=torch.float32) -> torch.Tensor:
    box.check_within(size)
    m = torch.zeros((1, *size), dtype=dtype)
    m[:, box.y_min:box.y_max, box.x_min:box.x_max] = 1
    return m


def param_hash(module: torch.nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in module.state_dict().items():
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()

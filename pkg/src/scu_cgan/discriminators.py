"""PatchGAN (full-image) and region (box-crop) discriminators."""

from __future__ import annotations

import torch
import torch.nn as nn

from .errors import ConfigurationError, DimensionError
from .ops import as_tensor, batched, crop_region  # noqa: F401  (crop_region re-exported)


def _block(cin, cout, stride, norm):
    layers = [nn.Conv2d(cin, cout, 4, stride=stride, padding=1)]
    if norm:
        layers.append(nn.InstanceNorm2d(cout))
    layers.append(nn.LeakyReLU(0.2))
    return layers


class PatchDiscriminator(nn.Module):
    """Stride-2 conv stack ending in a 1-channel score map at 1/2^n resolution.

    ``norm=False`` drops instance normalization, which otherwise mixes global
    statistics into every score; only then is each score strictly local.
    """

    kind = "patchgan"

    def __init__(self, in_channels=3, widths=(32, 64, 128), norm=True):
        super().__init__()
        self.in_channels, self.widths, self.norm = in_channels, tuple(widths), bool(norm)
        layers, c = [], in_channels
        for i, w in enumerate(self.widths):
            layers += _block(c, w, 2, norm=self.norm and i > 0)
            c = w
        layers.append(nn.Conv2d(c, 1, 3, padding=1))
        self.net = nn.Sequential(*layers)

    @property
    def stride(self):
        return 2 ** len(self.widths)

    def config(self):
        return dict(kind=self.kind, in_channels=self.in_channels, widths=self.widths, norm=self.norm)

    def receptive_field(self) -> tuple[int, int, int]:
        """(size, stride, offset): score (i, j) sees pixels
        [offset + stride*i, offset + stride*i + size) along each axis."""
        size, jump, start = 1, 1, 0.0
        for m in self.net:
            if isinstance(m, nn.Conv2d):
                k, s, p = m.kernel_size[0], m.stride[0], m.padding[0]
                start += ((k - 1) / 2 - p) * jump
                size += (k - 1) * jump
                jump *= s
        return size, jump, int(start - (size - 1) / 2)

    def forward(self, x):
        if x.shape[-2] % self.stride or x.shape[-1] % self.stride:
            raise DimensionError(f"spatial size {tuple(x.shape[-2:])} not divisible by {self.stride}")
        return self.net(x)


class RegionDiscriminator(nn.Module):
    """Conv stack, global average pooling and a linear head; one scalar per crop."""

    kind = "region"

    def __init__(self, in_channels=3, widths=(32, 64, 128), crop_size=32, norm=True):
        super().__init__()
        if crop_size % 2 ** len(widths):
            raise ConfigurationError(f"crop_size {crop_size} not divisible by {2 ** len(widths)}")
        self.in_channels, self.widths = in_channels, tuple(widths)
        self.crop_size, self.norm = int(crop_size), bool(norm)
        layers, c = [], in_channels
        for i, w in enumerate(self.widths):
            layers += _block(c, w, 2, norm=self.norm and i > 0)
            c = w
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(c, 1)

    def config(self):
        return dict(kind=self.kind, in_channels=self.in_channels, widths=self.widths,
                    crop_size=self.crop_size, norm=self.norm)

    def forward(self, x):
        if tuple(x.shape[-2:]) != (self.crop_size, self.crop_size):
            raise DimensionError(f"expected {self.crop_size}x{self.crop_size} crop, got {tuple(x.shape[-2:])}")
        return self.head(self.features(x).mean(dim=(2, 3)))[:, 0]


def patchgan_forward(image, module: PatchDiscriminator) -> torch.Tensor:
    x, squeeze = batched(as_tensor(image, next(module.parameters()).dtype))
    y = module(x)
    return y[0] if squeeze else y


def region_disc_forward(crop, module: RegionDiscriminator) -> torch.Tensor:
    x, squeeze = batched(as_tensor(crop, next(module.parameters()).dtype))
    y = module(x)
    return y[0] if squeeze else y

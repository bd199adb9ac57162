"""Generators: six-CBAM U-Net, ResNet-style CycleGAN baseline, latent generators.

All translation generators consume a 6-channel input: the source image in
channels 0-2 and a guidance image (source with a composited patch in the
target box) in channels 3-5.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import RegionBox
from .errors import ConfigurationError, DimensionError
from .ops import as_tensor, batched, resize_bilinear


# ------------------------------------------------------------------- CBAM

class ChannelAttention(nn.Module):
    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        if channels % reduction:
            raise ConfigurationError(f"channels={channels} not divisible by reduction={reduction}")
        self.mlp = nn.Sequential(
            nn.Linear(channels, channels // reduction, bias=False),
            nn.ReLU(),
            nn.Linear(channels // reduction, channels, bias=False),
        )

    def forward(self, x):
        avg = x.mean(dim=(2, 3))
        mx = x.amax(dim=(2, 3))
        return torch.sigmoid(self.mlp(avg) + self.mlp(mx))


class SpatialAttention(nn.Module):
    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2)

    def forward(self, x):
        pooled = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(pooled))


class CBAM(nn.Module):
    """Channel attention followed by spatial attention."""

    def __init__(self, channels: int, reduction: int = 4, kernel_size: int = 7):
        super().__init__()
        self.channels = channels
        self.channel = ChannelAttention(channels, reduction)
        self.spatial = SpatialAttention(kernel_size)

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise DimensionError(f"CBAM expects {self.channels} channels, got {x.shape[1]}")
        xc = self.channel(x)[:, :, None, None] * x
        return self.spatial(xc) * xc


def channel_attention(feat, module: ChannelAttention) -> torch.Tensor:
    """Per-channel weights in (0, 1); [C] for [C,H,W] input, [N,C] for batched."""
    x, squeeze = batched(as_tensor(feat))
    w = module(x)
    return w[0] if squeeze else w


def spatial_attention(feat, module: SpatialAttention) -> torch.Tensor:
    x, squeeze = batched(as_tensor(feat))
    m = module(x)
    return m[0] if squeeze else m


def cbam(feat, module: CBAM) -> torch.Tensor:
    x, squeeze = batched(as_tensor(feat))
    y = module(x)
    return y[0] if squeeze else y


# ------------------------------------------------------------------ U-Net

def _down(cin, cout, norm=True):
    layers = [nn.Conv2d(cin, cout, 4, stride=2, padding=1)]
    if norm:
        layers.append(nn.InstanceNorm2d(cout))
    layers.append(nn.LeakyReLU(0.2))
    return nn.Sequential(*layers)


def _up(cin, cout):
    return nn.Sequential(
        nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1),
        nn.InstanceNorm2d(cout),
        nn.ReLU(),
    )


def skip_fuse(enc_feat, dec_prev, decoder: nn.Module, enc_attn: nn.Module, dec_attn: nn.Module):
    """Decoder^n(concat(CBAM(F_e^n), CBAM(F_d^{n-1}))), encoder features first."""
    if enc_feat.shape[-2:] != dec_prev.shape[-2:]:
        raise DimensionError(
            f"skip spatial mismatch: encoder {tuple(enc_feat.shape[-2:])} vs decoder {tuple(dec_prev.shape[-2:])}"
        )
    return decoder(torch.cat([enc_attn(enc_feat), dec_attn(dec_prev)], dim=1))


class UNetGenerator(nn.Module):
    """U-Net translator with a CBAM on every encoder output and decoder input.

    With depth d this holds 2*d CBAM blocks (six at the default depth 3).
    """

    kind = "unet"

    def __init__(self, in_channels=6, out_channels=3, widths=(32, 64, 128),
                 use_cbam=True, reduction=4, attn_kernel=7):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.widths = tuple(int(w) for w in widths)
        self.use_cbam = bool(use_cbam)
        self.reduction = reduction
        self.attn_kernel = attn_kernel
        depth = len(self.widths)
        if not 1 <= depth <= 5:
            raise ConfigurationError(f"depth {depth} outside [1, 5]")

        def attn(c):
            return CBAM(c, reduction, attn_kernel) if self.use_cbam else nn.Identity()

        chans = [in_channels, *self.widths]
        self.down = nn.ModuleList(_down(chans[i], chans[i + 1], norm=i > 0) for i in range(depth))
        self.bottleneck = nn.Sequential(
            nn.Conv2d(self.widths[-1], self.widths[-1], 3, padding=1),
            nn.InstanceNorm2d(self.widths[-1]),
            nn.ReLU(),
        )
        self.cbam_enc = nn.ModuleList(attn(c) for c in self.widths)

        # decoder n consumes encoder level depth-n and the previous decoder output
        dec_in = self.widths[-1]
        cbam_dec, up = [], []
        for level in reversed(range(depth)):
            out = self.widths[level - 1] if level > 0 else self.widths[0]
            cbam_dec.append(attn(dec_in))
            up.append(_up(self.widths[level] + dec_in, out))
            dec_in = out
        self.cbam_dec = nn.ModuleList(cbam_dec)
        self.up = nn.ModuleList(up)
        self.head = nn.Conv2d(self.widths[0], out_channels, 3, padding=1)

    @property
    def depth(self):
        return len(self.widths)

    def config(self) -> dict:
        return dict(kind=self.kind, in_channels=self.in_channels, out_channels=self.out_channels,
                    widths=self.widths, use_cbam=self.use_cbam, reduction=self.reduction,
                    attn_kernel=self.attn_kernel)

    def check_input(self, x):
        if x.shape[1] != self.in_channels:
            raise DimensionError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        k = 2 ** self.depth
        if x.shape[-2] % k or x.shape[-1] % k:
            raise DimensionError(f"spatial size {tuple(x.shape[-2:])} not divisible by {k}")

    def forward(self, x):
        self.check_input(x)
        skips = []
        h = x
        for block in self.down:
            h = block(h)
            skips.append(h)
        d = self.bottleneck(h)
        for n, (dec, attn_d) in enumerate(zip(self.up, self.cbam_dec)):
            level = self.depth - 1 - n
            d = skip_fuse(skips[level], d, dec, self.cbam_enc[level], attn_d)
        return torch.tanh(self.head(d))


# --------------------------------------------------------- ResNet baseline

class _ResBlock(nn.Module):
    def __init__(self, c):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1), nn.Conv2d(c, c, 3), nn.InstanceNorm2d(c), nn.ReLU(),
            nn.ReflectionPad2d(1), nn.Conv2d(c, c, 3), nn.InstanceNorm2d(c),
        )

    def forward(self, x):
        return x + self.body(x)


class ResnetGenerator(nn.Module):
    """CycleGAN encoder / residual / decoder translator without skips."""

    kind = "resnet"

    def __init__(self, in_channels=6, out_channels=3, base=32, n_blocks=3):
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.base, self.n_blocks = base, n_blocks
        b = base
        self.net = nn.Sequential(
            nn.ReflectionPad2d(3), nn.Conv2d(in_channels, b, 7), nn.InstanceNorm2d(b), nn.ReLU(),
            nn.Conv2d(b, 2 * b, 3, stride=2, padding=1), nn.InstanceNorm2d(2 * b), nn.ReLU(),
            nn.Conv2d(2 * b, 4 * b, 3, stride=2, padding=1), nn.InstanceNorm2d(4 * b), nn.ReLU(),
            *[_ResBlock(4 * b) for _ in range(n_blocks)],
            nn.ConvTranspose2d(4 * b, 2 * b, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(2 * b), nn.ReLU(),
            nn.ConvTranspose2d(2 * b, b, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(b), nn.ReLU(),
            nn.ReflectionPad2d(3), nn.Conv2d(b, out_channels, 7), nn.Tanh(),
        )

    def config(self):
        return dict(kind=self.kind, in_channels=self.in_channels, out_channels=self.out_channels,
                    base=self.base, n_blocks=self.n_blocks)

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise DimensionError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        if x.shape[-2] % 4 or x.shape[-1] % 4:
            raise DimensionError(f"spatial size {tuple(x.shape[-2:])} not divisible by 4")
        return self.net(x)


# ------------------------------------------------------ latent generators

class LatentGenerator(nn.Module):
    """Maps a latent vector to a [3, size, size] image by repeated 2x upsampling from 4x4."""

    kind = "latent"

    def __init__(self, latent_dim=16, size=16, base=64):
        super().__init__()
        n_up = (int(size) // 4).bit_length() - 1
        if size < 8 or 4 * 2 ** n_up != size:
            raise ConfigurationError(f"latent generator size {size} must be 4 * 2^k with k >= 1")
        self.latent_dim, self.size, self.base = latent_dim, size, base
        self.fc = nn.Linear(latent_dim, base * 16)
        layers, c = [], base
        for i in range(n_up):
            last = i == n_up - 1
            cout = 3 if last else max(c // 2, 16)
            layers.append(nn.ConvTranspose2d(c, cout, 4, stride=2, padding=1))
            if not last:
                layers.append(nn.ReLU())
            c = cout
        self.net = nn.Sequential(*layers)

    def config(self):
        return dict(kind=self.kind, latent_dim=self.latent_dim, size=self.size, base=self.base)

    def forward(self, z):
        h = F.relu(self.fc(z)).view(-1, self.base, 4, 4)
        return torch.tanh(self.net(h))


class FlameGenerator(LatentGenerator):
    """Flame-patch generator; pre-trained as an LSGAN and then frozen."""

    kind = "flame"

    def __init__(self, latent_dim=16, size=16, base=64, frozen=False):
        super().__init__(latent_dim, size, base)
        self.frozen = False
        if frozen:
            self.freeze()

    def config(self):
        return {**super().config(), "kind": self.kind, "frozen": self.frozen}

    def freeze(self):
        self.frozen = True
        self.requires_grad_(False)
        self.eval()
        return self

    def train(self, mode=True):
        # a frozen flame generator never re-enters training mode
        return super().train(mode and not getattr(self, "frozen", False))


def flame_generate(z, module: LatentGenerator) -> torch.Tensor:
    z = as_tensor(z, next(module.parameters()).dtype)
    single = z.dim() == 1
    with torch.set_grad_enabled(torch.is_grad_enabled() and not getattr(module, "frozen", False)):
        out = module(z.view(1, -1) if single else z)
    return out[0] if single else out


# -------------------------------------------------------- 6-channel input

def compose_six_channel(image, box: RegionBox, patch, noise_std: float = 0.1, seed: int = 0,
                        blend: float = 1.0) -> torch.Tensor:
    """Stack the source image with a guidance copy whose box holds the patch.

    Inside the box the guidance is clamp(blend*resize(patch) + (1-blend)*source
    + N(0, noise_std)); outside it equals the source exactly. Differentiable in
    both image and patch.
    """
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    image = as_tensor(image)
    patch = as_tensor(patch, image.dtype)
    if image.dim() != 3 or image.shape[0] != 3:
        raise DimensionError(f"expected [3,H,W] image, got {tuple(image.shape)}")
    if patch.dim() != 3 or patch.numel() == 0:
        raise DimensionError(f"expected nonempty [3,h,w] patch, got {tuple(patch.shape)}")
    H, W = image.shape[-2:]
    box.check_within((H, W))

    region = image[:, box.y_min:box.y_max, box.x_min:box.x_max]
    new = resize_bilinear(patch, (box.height, box.width))
    if blend != 1.0:
        new = blend * new + (1.0 - blend) * region
    if noise_std > 0:
        g = torch.Generator().manual_seed(int(seed) & (2**63 - 1))
        new = new + noise_std * torch.randn(new.shape, generator=g, dtype=torch.float64).to(image.dtype)
    new = new.clamp(-1.0, 1.0)

    pad = (box.x_min, W - box.x_max, box.y_min, H - box.y_max)
    inside = F.pad(torch.ones_like(new[:1]), pad)
    guidance = image * (1 - inside) + F.pad(new, pad)
    return torch.cat([image, guidance], dim=0)


def neutral_patch(image, box: RegionBox, size=16) -> torch.Tensor:
    """Constant patch of the mean colour outside ``box`` (fire-to-non-fire guidance)."""
    image = as_tensor(image)
    mask = torch.ones(image.shape[-2:], dtype=torch.bool)
    mask[box.y_min:box.y_max, box.x_min:box.x_max] = False
    if mask.any():
        colour = image[:, mask].mean(dim=1)
    else:
        colour = image.mean(dim=(1, 2))
    return colour[:, None, None].expand(3, size, size).contiguous()


def generator_forward(x6, module: nn.Module) -> torch.Tensor:
    x, squeeze = batched(as_tensor(x6, next(module.parameters()).dtype))
    y = module(x)
    return y[0] if squeeze else y


def count_cbam_groups(module: nn.Module) -> int:
    prefixes = {name.rsplit(".channel.", 1)[0].rsplit(".spatial.", 1)[0]
                for name, _ in module.named_parameters()
                if ".channel." in name or ".spatial." in name}
    return len(prefixes)

"""Procedural indoor scenes, flame patches and the on-disk dataset format.

Images live in memory as float32 arrays of shape [C, H, W] with values in
[-1, 1]. On disk they are 8-bit RGB PNGs (``v = byte / 127.5 - 1``) next to
YOLO-style label files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BoundsError, DimensionError, ParseError

FIRE = "fire"
NON_FIRE = "non_fire"
DOMAINS = (FIRE, NON_FIRE)

FIRE_CLASS = 0
# non-fire records store their designated generation box under this class id
TARGET_CLASS = 1

MIN_REGION_AREA = 16


@dataclass(frozen=True)
class RegionBox:
    """Axis-aligned pixel rectangle; ``x_max``/``y_max`` are exclusive."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if int(v) != v:
                raise BoundsError(f"{name}={v!r} is not an integer")
            object.__setattr__(self, name, int(v))
        if self.x_min < 0 or self.y_min < 0:
            raise BoundsError(f"negative box origin: {self}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise BoundsError(f"empty box: {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def check_within(self, size: tuple[int, int]) -> None:
        h, w = size
        if self.x_max > w or self.y_max > h:
            raise BoundsError(f"{self} exceeds image of size {h}x{w}")

    def check_generative(self, size: tuple[int, int]) -> None:
        """Bounds check plus the minimum-area rule for generation regions."""
        self.check_within(size)
        if self.area < MIN_REGION_AREA:
            raise BoundsError(f"{self} has area {self.area} < {MIN_REGION_AREA}")


@dataclass
class SceneRecord:
    image: np.ndarray
    boxes: list[RegionBox] = field(default_factory=list)
    domain: str = NON_FIRE

    @property
    def target_box(self) -> RegionBox:
        return self.boxes[0]

    @property
    def size(self) -> tuple[int, int]:
        return self.image.shape[1], self.image.shape[2]


def check_image(x: np.ndarray) -> None:
    """Raise unless ``x`` satisfies the image-tensor contract."""
    if x.ndim != 3 or x.shape[0] not in (1, 3, 6):
        raise DimensionError(f"expected [C,H,W] with C in (1,3,6), got {x.shape}")
    if x.shape[1] < 8 or x.shape[2] < 8:
        raise DimensionError(f"spatial size {x.shape[1:]} below 8")
    if not np.all(np.isfinite(x)) or x.min() < -1.0 or x.max() > 1.0:
        raise BoundsError("image values must be finite and within [-1, 1]")


def box_to_mask(box: RegionBox, size: tuple[int, int]) -> np.ndarray:
    box.check_within(size)
    mask = np.zeros((1, *size), dtype=np.float32)
    mask[0, box.y_min:box.y_max, box.x_min:box.x_max] = 1.0
    return mask


def mask_to_box(mask: np.ndarray) -> RegionBox | None:
    """Tight bounding box of the nonzero entries of a [1,H,W] or [H,W] mask."""
    m = np.asarray(mask).reshape(mask.shape[-2:]) != 0
    ys = np.flatnonzero(m.any(axis=1))
    xs = np.flatnonzero(m.any(axis=0))
    if ys.size == 0:
        return None
    return RegionBox(int(xs[0]), int(ys[0]), int(xs[-1]) + 1, int(ys[-1]) + 1)


# ---------------------------------------------------------------- synthesis

def _check_size(size, minimum):
    h, w = size
    if h < minimum or w < minimum:
        raise DimensionError(f"size {size} below minimum {minimum}")
    return int(h), int(w)


def _flame_layer(h: int, w: int, rng: np.random.Generator):
    """Render one flame filling an h x w canvas.

    Returns (rgb [3,h,w], alpha [h,w]); alpha > 0 exactly on flame pixels.
    """
    xs = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    ys = 1.0 - (np.arange(h) + 0.5) / h  # 0 at the bottom, 1 at the top
    u, v = np.meshgrid(xs, ys)

    width = rng.uniform(0.75, 0.95)
    freq = rng.uniform(1.5, 3.5)
    phase = rng.uniform(0.0, 2 * np.pi)
    sway = rng.uniform(-0.15, 0.15)

    base = np.clip(v / 0.12 + 0.35, 0.0, 1.0)  # rounded bottom
    radius = width * base * (1.0 - v) ** 0.7 * (0.8 + 0.2 * np.sin(np.pi * freq * v + phase))
    centre = sway * v ** 2
    dist = np.abs(u - centre) / np.maximum(radius, 1e-6)
    alpha = np.clip(1.0 - dist, 0.0, 1.0)
    alpha[radius <= 1e-6] = 0.0

    heat = np.sqrt(alpha) * (1.0 - 0.55 * v)
    outer = np.array([1.0, 0.15, -0.7])[:, None, None]
    core = np.array([1.0, 0.95, 0.55])[:, None, None]
    rgb = outer + (core - outer) * heat[None]
    return rgb, alpha


def synth_flame_patch(seed: int, size: tuple[int, int] = (16, 16)) -> np.ndarray:
    h, w = _check_size(size, 8)
    rng = np.random.default_rng([int(seed) & (2**64 - 1), 0xF1A3E])
    rgb, alpha = _flame_layer(h, w, rng)
    bg = np.array([-0.8, -0.88, -0.95])[:, None, None] + rng.uniform(-0.05, 0.05)
    a = np.clip(1.6 * alpha, 0.0, 1.0)[None]
    out = a * rgb + (1.0 - a) * bg
    return np.clip(out, -1.0, 1.0).astype(np.float32)


def _room(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    top = rng.uniform(-0.6, 0.15, size=3)
    bottom = top + rng.uniform(-0.25, 0.1, size=3)
    t = np.linspace(0.0, 1.0, h)[None, :, None]
    img = top[:, None, None] + (bottom - top)[:, None, None] * t
    img = np.broadcast_to(img, (3, h, w)).copy()

    floor_y = int(h * rng.uniform(0.65, 0.8))
    img[:, floor_y:, :] = rng.uniform(-0.8, 0.0, size=3)[:, None, None]

    for _ in range(rng.integers(2, 5)):
        fw = int(rng.integers(w // 8, w // 3 + 1))
        fh = int(rng.integers(h // 8, h // 3 + 1))
        x0 = int(rng.integers(0, w - fw + 1))
        y0 = int(rng.integers(h // 3, h - fh + 1))
        img[:, y0:y0 + fh, x0:x0 + fw] = rng.uniform(-0.9, 0.2, size=3)[:, None, None]
    return img


def _sample_target_box(h: int, w: int, rng: np.random.Generator) -> RegionBox:
    # uniform placement inside a central margin of one eighth per side
    bw = int(rng.integers(w // 4, w // 2 + 1))
    bh = int(rng.integers(h // 4, h // 2 + 1))
    mx, my = w // 8, h // 8
    x0 = int(rng.integers(mx, w - mx - bw + 1))
    y0 = int(rng.integers(my, h - my - bh + 1))
    return RegionBox(x0, y0, x0 + bw, y0 + bh)


def synth_scene(seed: int, size: tuple[int, int] = (64, 64), domain: str = NON_FIRE) -> SceneRecord:
    h, w = _check_size(size, 32)
    if h % 8 or w % 8:
        raise DimensionError(f"scene size {size} must be divisible by 8")
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    rng = np.random.default_rng([int(seed) & (2**64 - 1), 0x5CE9E])
    img = _room(h, w, rng)
    box = _sample_target_box(h, w, rng)

    if domain == FIRE:
        rgb, alpha = _flame_layer(box.height, box.width, rng)
        a = np.clip(1.6 * alpha, 0.0, 1.0)[None]
        region = img[:, box.y_min:box.y_max, box.x_min:box.x_max]
        img[:, box.y_min:box.y_max, box.x_min:box.x_max] = a * rgb + (1.0 - a) * region
        tight = mask_to_box(alpha > 0)
        box = RegionBox(box.x_min + tight.x_min, box.y_min + tight.y_min,
                        box.x_min + tight.x_max, box.y_min + tight.y_max)

    img = np.clip(img, -1.0, 1.0).astype(np.float32)
    return SceneRecord(image=img, boxes=[box], domain=domain)


def synth_dataset(seed: int, count: int, size=(64, 64), domain: str = "both") -> list[SceneRecord]:
    """``count`` scenes; with domain ``both`` even indices are non-fire, odd are fire."""
    records = []
    for i in range(count):
        if domain == "both":
            d = NON_FIRE if i % 2 == 0 else FIRE
        else:
            d = domain
        records.append(synth_scene(seed * 1_000_003 + i, size, d))
    return records


def split_domains(records):
    nf = [r for r in records if r.domain == NON_FIRE and r.boxes]
    f = [r for r in records if r.domain == FIRE]
    return nf, f


# ---------------------------------------------------------------- disk I/O

def to_bytes(x: np.ndarray) -> np.ndarray:
    return np.clip(np.round((x.astype(np.float32) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def from_bytes(b: np.ndarray) -> np.ndarray:
    return (b.astype(np.float32) / np.float32(127.5) - np.float32(1.0)).astype(np.float32)


def write_png(path, image: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(to_bytes(image).transpose(1, 2, 0)), "RGB").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return from_bytes(arr.transpose(2, 0, 1))


def format_label(cls: int, box: RegionBox, size) -> str:
    h, w = size
    cx = (box.x_min + box.x_max) / 2 / w
    cy = (box.y_min + box.y_max) / 2 / h
    return f"{cls} {cx:.6f} {cy:.6f} {box.width / w:.6f} {box.height / h:.6f}"


def parse_label_line(line: str, size, path, line_no) -> tuple[int, RegionBox]:
    parts = line.split()
    if len(parts) != 5:
        raise ParseError(path, line_no, f"expected 5 fields, got {len(parts)}")
    try:
        cls = int(parts[0])
        cx, cy, bw, bh = (float(p) for p in parts[1:])
    except ValueError as exc:
        raise ParseError(path, line_no, str(exc)) from None
    h, w = size
    try:
        box = RegionBox(round((cx - bw / 2) * w), round((cy - bh / 2) * h),
                        round((cx + bw / 2) * w), round((cy + bh / 2) * h))
    except BoundsError as exc:
        raise ParseError(path, line_no, str(exc)) from None
    return cls, box


def read_manifest(directory) -> dict:
    """key=value entries plus a ``records`` dict of per-record annotations."""
    path = Path(directory) / "manifest.txt"
    out = {"records": {}}
    if not path.exists():
        return out
    for i, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("record="):
            fields = dict(tok.split("=", 1) for tok in line.split())
            out["records"][fields.pop("record")] = fields
        elif "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
        else:
            raise ParseError(path, i, "expected key=value")
    return out


def save_dataset(records, directory, seed=None, provenance=None) -> None:
    """Write records as images/NNNNNN.png + labels/NNNNNN.txt + manifest.txt.

    Must not be called concurrently on the same directory.
    """
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    (directory / "labels").mkdir(parents=True, exist_ok=True)
    size = records[0].size if records else (0, 0)
    for i, rec in enumerate(records):
        if rec.size != size:
            raise DimensionError(f"record {i} has size {rec.size}, expected {size}")
        stem = f"{i:06d}"
        write_png(directory / "images" / f"{stem}.png", rec.image)
        cls = FIRE_CLASS if rec.domain == FIRE else TARGET_CLASS
        lines = [format_label(cls, b, size) for b in rec.boxes]
        (directory / "labels" / f"{stem}.txt").write_text("".join(l + "\n" for l in lines))
    manifest = [f"count={len(records)}", f"height={size[0]}", f"width={size[1]}",
                f"seed={'none' if seed is None else seed}"]
    if provenance is not None:
        manifest += [f"record={i:06d} provenance={p}" for i, p in enumerate(provenance)]
    (directory / "manifest.txt").write_text("\n".join(manifest) + "\n")


def load_dataset(directory) -> list[SceneRecord]:
    directory = Path(directory)
    img_dir = directory / "images"
    if not img_dir.is_dir():
        return []
    records = []
    for name in sorted(os.listdir(img_dir)):
        if not name.endswith(".png"):
            continue
        stem = name[:-4]
        image = read_png(img_dir / name)
        size = image.shape[1:]
        label_path = directory / "labels" / f"{stem}.txt"
        boxes, classes = [], []
        if label_path.exists():
            for n, line in enumerate(label_path.read_text().splitlines(), 1):
                if not line.strip():
                    continue
                cls, box = parse_label_line(line, size, label_path, n)
                classes.append(cls)
                boxes.append(box)
        domain = FIRE if FIRE_CLASS in classes else NON_FIRE
        records.append(SceneRecord(image=image, boxes=boxes, domain=domain))
    return records

"""Augmented-dataset export, dataset mixing and a toy single-class detector."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import FIRE, NON_FIRE, SceneRecord, load_dataset, read_manifest, save_dataset
from .errors import ConfigurationError, LoadError, TrainingDivergenceError
from .generator import LatentGenerator
from .metrics import Detection, GroundTruth, MetricReport, box_iou, detection_report
from .trainer import load_generator, translate_nonfire


@dataclass
class AugmentPlan:
    source_dir: str
    checkpoint_dir: str
    count: int
    seed: int
    out_dir: str
    ratio: tuple = (1, 5)

    def __post_init__(self):
        if self.count < 1:
            raise ConfigurationError("count must be >= 1")
        if len(self.ratio) != 2 or min(self.ratio) < 0 or sum(self.ratio) == 0:
            raise ConfigurationError(f"bad mix ratio {self.ratio}")


def generate_augmented(plan: AugmentPlan) -> Path:
    """Translate non-fire records into labelled fire images.

    Each output is labelled with exactly the target box used for composition.
    """
    source = Path(plan.source_dir)
    if not source.is_dir():
        raise LoadError(f"source dataset {source} not found")
    pool = [r for r in load_dataset(source) if r.domain == NON_FIRE and r.boxes]
    if not pool:
        raise LoadError(f"no non-fire records with target boxes in {source}")
    gen, flame, config = load_generator(plan.checkpoint_dir)
    if isinstance(gen, LatentGenerator) or flame is None:
        raise ConfigurationError("augmentation needs a translation checkpoint with a flame generator")

    order = np.random.default_rng([plan.seed, 0xA1]).permutation(len(pool))
    out = []
    for i in range(plan.count):
        rec = pool[order[i % len(pool)]]
        img = translate_nonfire(gen, flame, rec.image, rec.target_box, seed=plan.seed * 1_000_003 + i,
                                noise_std=config.noise_std, blend=config.blend)
        out.append(SceneRecord(image=img, boxes=[rec.target_box], domain=FIRE))
    out_dir = Path(plan.out_dir)
    save_dataset(out, out_dir, seed=plan.seed)
    return out_dir


def mix_counts(n_original: int, n_generated: int, ratio) -> tuple[int, int]:
    """Largest (original, generated) counts in proportion ``ratio`` that fit the inputs."""
    a, b = ratio
    if b == 0:
        return n_original, 0
    if a == 0:
        return 0, n_generated
    k = min(n_original / a, n_generated / b)
    return int(math.floor(a * k + 1e-9)), int(math.floor(b * k + 1e-9))


def mix_datasets(original_dir, generated_dir, ratio, seed, out_dir) -> Path:
    orig, gen = load_dataset(original_dir), load_dataset(generated_dir)
    sizes = {r.size for r in orig + gen}
    if len(sizes) > 1:
        raise ConfigurationError(f"resolution mismatch between datasets: {sorted(sizes)}")
    n_o, n_g = mix_counts(len(orig), len(gen), ratio)
    rng = np.random.default_rng([int(seed), 0x313])
    pick_o = np.sort(rng.choice(len(orig), n_o, replace=False)) if n_o < len(orig) else np.arange(n_o)
    pick_g = np.sort(rng.choice(len(gen), n_g, replace=False)) if n_g < len(gen) else np.arange(n_g)
    records = [orig[i] for i in pick_o] + [gen[i] for i in pick_g]
    provenance = ["original"] * n_o + ["generated"] * n_g
    out_dir = Path(out_dir)
    save_dataset(records, out_dir, seed=seed, provenance=provenance)
    return out_dir


def provenance_counts(directory) -> dict:
    counts = {}
    for fields in read_manifest(directory)["records"].values():
        p = fields.get("provenance")
        counts[p] = counts.get(p, 0) + 1
    return counts


# ----------------------------------------------------------- toy detector

class ToyDetector(nn.Module):
    """Grid detector: each 8x8 cell predicts (objectness, cx, cy, w, h)."""

    stride = 8

    def __init__(self, width=48):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, width, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(width, width, 3, padding=1), nn.ReLU(),
        )
        self.head = nn.Conv2d(width, 5, 1)

    def forward(self, x):
        return self.head(self.body(x))


def _targets(records, size, stride):
    h, w = size
    gh, gw = h // stride, w // stride
    obj = torch.zeros(len(records), gh, gw)
    box = torch.zeros(len(records), 4, gh, gw)
    for n, rec in enumerate(records):
        if rec.domain != FIRE:
            continue
        for b in rec.boxes:
            cx, cy = (b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2
            gx, gy = min(int(cx // stride), gw - 1), min(int(cy // stride), gh - 1)
            obj[n, gy, gx] = 1.0
            box[n, :, gy, gx] = torch.tensor([cx / stride - gx, cy / stride - gy, b.width / w, b.height / h])
    return obj, box


def _decode(out, size, stride, min_conf=0.01, max_dets=10, nms_iou=0.5):
    h, w = size
    conf = torch.sigmoid(out[0])
    geo = torch.sigmoid(out[1:])
    gh, gw = conf.shape
    cands = []
    for gy in range(gh):
        for gx in range(gw):
            c = float(conf[gy, gx])
            if c < min_conf:
                continue
            cx = (gx + float(geo[0, gy, gx])) * stride
            cy = (gy + float(geo[1, gy, gx])) * stride
            bw, bh = float(geo[2, gy, gx]) * w, float(geo[3, gy, gx]) * h
            b = (max(0.0, cx - bw / 2), max(0.0, cy - bh / 2), min(float(w), cx + bw / 2), min(float(h), cy + bh / 2))
            if b[2] > b[0] and b[3] > b[1]:
                cands.append((c, b))
    cands.sort(key=lambda t: -t[0])
    kept = []
    for c, b in cands:
        if all(box_iou(b, k) < nms_iou for _, k in kept):
            kept.append((c, b))
        if len(kept) == max_dets:
            break
    return kept


def toy_detector_train_eval(train_dir, test_dir, seed=0, steps=400, batch_size=8, lr=2e-3) -> MetricReport:
    train = load_dataset(train_dir) if not isinstance(train_dir, list) else train_dir
    test = load_dataset(test_dir) if not isinstance(test_dir, list) else test_dir
    if not test:
        raise ValueError("test set is empty")
    if not train:
        raise ValueError("training set is empty")
    size = train[0].size
    if any(r.size != size for r in train + test):
        raise ConfigurationError("all records must share one resolution")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = ToyDetector()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    images = torch.from_numpy(np.stack([r.image for r in train]))
    obj_t, box_t = _targets(train, size, ToyDetector.stride)

    model.train()
    for step in range(steps):
        idx = np.random.default_rng([seed, step, 0xDE]).choice(len(train), min(batch_size, len(train)), replace=False)
        out = model(images[idx])
        obj, box = obj_t[idx], box_t[idx]
        pos = obj > 0
        loss = F.binary_cross_entropy_with_logits(out[:, 0], obj, pos_weight=torch.tensor(4.0))
        if pos.any():
            pred = torch.sigmoid(out[:, 1:]).permute(0, 2, 3, 1)[pos]
            loss = loss + 5.0 * F.mse_loss(pred, box.permute(0, 2, 3, 1)[pos])
        v = loss.item()
        if not math.isfinite(v) or v > 1e6:
            raise TrainingDivergenceError(step, "detector", v)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()

    model.eval()
    detections, truths = [], []
    with torch.no_grad():
        for i, rec in enumerate(test):
            out = model(torch.from_numpy(rec.image)[None])[0]
            for c, b in _decode(out, size, ToyDetector.stride):
                detections.append(Detection(str(i), b, min(max(c, 0.0), 1.0)))
            if rec.domain == FIRE:
                truths += [GroundTruth(str(i), b.as_tuple()) for b in rec.boxes]
    return detection_report(detections, truths)

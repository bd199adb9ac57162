"""Image-quality metrics (FID, KID, perceptual distance, generation IoU) and
detection metrics (precision, recall, AP, mAP@0.5 and mAP@0.5:0.95)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from .data import FIRE_CLASS, RegionBox, load_dataset, parse_label_line, read_png
from .errors import DimensionError, NumericalError, ParseError

COVARIANCE_RIDGE = 1e-6
IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.arange(101) / 100


# --------------------------------------------------------- feature extractor

class FeatureExtractor:
    """Frozen random conv net: four stride-2 3x3 conv + ReLU layers, then global
    average pooling to a ``dim``-vector. Weights are drawn from a fixed numpy
    seed so features are bit-identical across runs."""

    def __init__(self, dim=64, widths=(16, 32, 64), seed=0, layers=None):
        rng = np.random.default_rng(seed)
        chans = [3, *widths, dim]
        self.weights, self.biases = [], []
        for cin, cout in zip(chans[:-1], chans[1:]):
            std = math.sqrt(2.0 / (cin * 9))
            self.weights.append(torch.from_numpy(rng.normal(0.0, std, (cout, cin, 3, 3))))
            self.biases.append(torch.from_numpy(rng.normal(0.0, 0.01, cout)))
        self.strides = [2] * len(self.weights)
        self.dim = dim
        self.layers = tuple(range(len(self.weights))) if layers is None else tuple(layers)

    @classmethod
    def from_weights(cls, weights, biases, strides=None, layers=None):
        """Extractor with explicit conv weights (same padding, ReLU after each)."""
        ext = cls.__new__(cls)
        ext.weights = [torch.as_tensor(np.asarray(w, dtype=np.float64)) for w in weights]
        ext.biases = [torch.as_tensor(np.asarray(b, dtype=np.float64)) for b in biases]
        ext.strides = list(strides) if strides is not None else [1] * len(ext.weights)
        ext.dim = ext.weights[-1].shape[0]
        ext.layers = tuple(range(len(ext.weights))) if layers is None else tuple(layers)
        return ext

    def feature_maps(self, images) -> list[torch.Tensor]:
        x = torch.as_tensor(np.asarray(images, dtype=np.float64))
        if x.dim() == 3:
            x = x[None]
        maps = []
        for w, b, stride in zip(self.weights, self.biases, self.strides):
            x = F.relu(F.conv2d(x, w, b, stride=stride, padding=w.shape[-1] // 2))
            maps.append(x)
        return maps

    def __call__(self, images) -> np.ndarray:
        """[N,3,H,W] (or [3,H,W]) images -> [N, dim] float64 features."""
        return self.feature_maps(images)[-1].mean(dim=(2, 3)).numpy()


class EmbeddingFile:
    """Features supplied externally as a .npy array of shape [N, d]."""

    def __init__(self, path):
        self.features = np.load(path).astype(np.float64)

    def __call__(self, _images=None) -> np.ndarray:
        return self.features


def features_of(images, extractor) -> np.ndarray:
    feats = [extractor(np.asarray(images[i:i + 64])) for i in range(0, len(images), 64)]
    return np.concatenate(feats, axis=0)


# ----------------------------------------------------------------- FID / KID

def _sqrt_psd(a):
    vals, vecs = np.linalg.eigh((a + a.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(mu1, cov1, mu2, cov2) -> float:
    """||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)).

    The trace term uses Tr((S1 S2)^(1/2)) = Tr((S1^(1/2) S2 S1^(1/2))^(1/2)),
    evaluated by eigendecomposition of the symmetric product with tiny
    negative eigenvalues clamped to zero.
    """
    mu1, mu2 = np.atleast_1d(np.asarray(mu1, float)), np.atleast_1d(np.asarray(mu2, float))
    cov1, cov2 = np.atleast_2d(np.asarray(cov1, float)), np.atleast_2d(np.asarray(cov2, float))
    d = mu1.shape[0]
    if mu2.shape != (d,) or cov1.shape != (d, d) or cov2.shape != (d, d):
        raise DimensionError(f"inconsistent shapes {mu1.shape} {cov1.shape} {mu2.shape} {cov2.shape}")
    try:
        s1 = _sqrt_psd(cov1)
        prod = s1 @ cov2 @ s1
        vals = np.linalg.eigvalsh((prod + prod.T) / 2)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"matrix square root failed ({exc}); cond(S1)={np.linalg.cond(cov1):.3g}, "
                             f"cond(S2)={np.linalg.cond(cov2):.3g}") from None
    if not np.all(np.isfinite(vals)):
        raise NumericalError(f"non-finite eigenvalues; cond(S1)={np.linalg.cond(cov1):.3g}, "
                             f"cond(S2)={np.linalg.cond(cov2):.3g}")
    tr_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    diff = mu1 - mu2
    return float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * tr_sqrt)


def gaussian_fit(feats, ridge=COVARIANCE_RIDGE):
    feats = np.asarray(feats, dtype=np.float64)
    mu = feats.mean(axis=0)
    if len(feats) > 1:
        cov = np.cov(feats, rowvar=False).reshape(feats.shape[1], feats.shape[1])
    else:
        cov = np.zeros((feats.shape[1], feats.shape[1]))
    return mu, cov + ridge * np.eye(feats.shape[1])


def fid_from_features(fa, fb, ridge=COVARIANCE_RIDGE) -> float:
    if len(fa) == 0 or len(fb) == 0:
        raise ValueError("FID needs non-empty feature sets")
    return frechet_distance(*gaussian_fit(fa, ridge), *gaussian_fit(fb, ridge))


def fid(set_a, set_b, extractor=None) -> float:
    if len(set_a) == 0 or len(set_b) == 0:
        raise ValueError("FID needs non-empty image sets")
    extractor = extractor or default_extractor()
    return fid_from_features(features_of(set_a, extractor), features_of(set_b, extractor))


def polynomial_kernel(x, y):
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def kid_from_features(fa, fb) -> float:
    """Unbiased MMD^2 under k(x, y) = (x.y/d + 1)^3; may be slightly negative."""
    fa, fb = np.asarray(fa, np.float64), np.asarray(fb, np.float64)
    n, m = len(fa), len(fb)
    if n < 2 or m < 2:
        raise ValueError(f"KID needs at least 2 samples per set, got {n} and {m}")
    kxx, kyy, kxy = polynomial_kernel(fa, fa), polynomial_kernel(fb, fb), polynomial_kernel(fa, fb)
    xx = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    yy = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    return float(xx + yy - 2.0 * kxy.mean())


def kid(set_a, set_b, extractor=None) -> float:
    if len(set_a) < 2 or len(set_b) < 2:
        raise ValueError("KID needs at least 2 images per set")
    extractor = extractor or default_extractor()
    return kid_from_features(features_of(set_a, extractor), features_of(set_b, extractor))


def perceptual_distance(img_a, img_b, extractor=None) -> float:
    """Sum over the extractor's layers of the mean squared feature-map difference."""
    a, b = np.asarray(img_a), np.asarray(img_b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    extractor = extractor or default_extractor()
    ma, mb = extractor.feature_maps(a), extractor.feature_maps(b)
    return float(sum(((ma[i] - mb[i]) ** 2).mean().item() for i in extractor.layers))


_DEFAULT = None


def default_extractor() -> FeatureExtractor:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = FeatureExtractor()
    return _DEFAULT


# ---------------------------------------------------------------- boxes / IoU

def _coords(box):
    if isinstance(box, RegionBox):
        return box.as_tuple()
    return tuple(float(v) for v in box)


def box_iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = _coords(a)
    bx0, by0, bx1, by1 = _coords(b)
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return float(inter / union) if union > 0 else 0.0


def localize_generated_fire(generated, original, threshold=0.2) -> RegionBox | None:
    """Tight box around the largest 4-connected region where the per-pixel
    max-channel |generated - original| exceeds ``threshold``."""
    g, o = np.asarray(generated), np.asarray(original)
    if g.shape != o.shape:
        raise DimensionError(f"shape mismatch: {g.shape} vs {o.shape}")
    changed = np.abs(g - o).max(axis=0) > threshold
    labels, n = ndimage.label(changed)  # default structure is 4-connected in 2-D
    if n == 0:
        return None
    sizes = np.bincount(labels.ravel())[1:]
    ys, xs = np.nonzero(labels == int(np.argmax(sizes)) + 1)
    return RegionBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


# ------------------------------------------------------------ detection metrics

@dataclass(frozen=True)
class Detection:
    image_id: str
    box: tuple
    confidence: float
    class_id: int = FIRE_CLASS

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    box: tuple
    class_id: int = FIRE_CLASS


def precision(tp: int, fp: int) -> float:
    return tp / (tp + fp) if tp + fp > 0 else 0.0


def recall(tp: int, fn: int) -> float:
    return tp / (tp + fn) if tp + fn > 0 else 0.0


def match_detections(detections, ground_truths, iou_threshold):
    """Greedy matching in descending confidence; returns a TP flag per sorted detection."""
    order = sorted(range(len(detections)), key=lambda i: -detections[i].confidence)
    gts_by_image = {}
    for g in ground_truths:
        gts_by_image.setdefault(g.image_id, []).append(g)
    used = {k: [False] * len(v) for k, v in gts_by_image.items()}
    flags = []
    for i in order:
        det = detections[i]
        best, best_iou = -1, iou_threshold
        for j, g in enumerate(gts_by_image.get(det.image_id, ())):
            if used[det.image_id][j]:
                continue
            iou = box_iou(det.box, g.box)
            if iou >= best_iou and (best < 0 or iou > best_iou):
                best, best_iou = j, iou
        if best >= 0:
            used[det.image_id][best] = True
        flags.append(best >= 0)
    return [detections[i] for i in order], flags


def average_precision(detections, ground_truths, iou_threshold=0.5) -> float:
    """101-point interpolated AP (COCO style). AP is 0 when there are no ground truths."""
    if not ground_truths:
        return 0.0
    _, flags = match_detections(detections, ground_truths, iou_threshold)
    if not flags:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum(np.logical_not(flags))
    rec = tp / len(ground_truths)
    prec = tp / (tp + fp)
    # monotone envelope from the right
    prec = np.maximum.accumulate(prec[::-1])[::-1]
    idx = np.searchsorted(rec, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(prec), prec[np.minimum(idx, len(prec) - 1)], 0.0)
    return float(sampled.mean())


def map_range(detections, ground_truths) -> tuple[float, float]:
    aps = [average_precision(detections, ground_truths, t) for t in IOU_THRESHOLDS]
    return aps[0], float(np.mean(aps))


# ------------------------------------------------------------------ reports

@dataclass
class MetricReport:
    fid: float | None = None
    kid: float | None = None
    perceptual: float | None = None
    iou: float | None = None
    precision: float | None = None
    recall: float | None = None
    map50: float | None = None
    map5095: float | None = None

    def present(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.present().values())

    def csv(self, keys=None, label=None) -> str:
        keys = keys or [f.name for f in fields(self)]
        cells = ["" if getattr(self, k) is None else repr(float(getattr(self, k))) for k in keys]
        return ",".join(([label] if label is not None else []) + cells)

    def text(self) -> str:
        return "\n".join(f"{k:>11s}: {'-' if v is None else f'{v:.6f}'}" for k, v in asdict(self).items())


def detection_report(detections, ground_truths, conf_threshold=0.5, iou_threshold=0.5) -> MetricReport:
    kept = [d for d in detections if d.confidence >= conf_threshold]
    _, flags = match_detections(kept, ground_truths, iou_threshold)
    tp = int(sum(flags))
    fp = len(flags) - tp
    fn = len(ground_truths) - tp
    m50, m5095 = map_range(detections, ground_truths)
    return MetricReport(precision=precision(tp, fp), recall=recall(tp, fn), map50=m50, map5095=m5095)


def read_ground_truths(dataset_dir) -> list[GroundTruth]:
    """Fire-class boxes of a dataset directory, keyed by record stem."""
    dataset_dir = Path(dataset_dir)
    out = []
    for img_path in sorted((dataset_dir / "images").glob("*.png")):
        stem = img_path.stem
        label_path = dataset_dir / "labels" / f"{stem}.txt"
        if not label_path.exists():
            continue
        size = read_png(img_path).shape[1:]
        for n, line in enumerate(label_path.read_text().splitlines(), 1):
            if line.strip():
                cls, box = parse_label_line(line, size, label_path, n)
                if cls == FIRE_CLASS:
                    out.append(GroundTruth(str(int(stem)), box.as_tuple()))
    return out


def read_predictions(path) -> list[Detection]:
    """``<image_id> <class_id> <confidence> <x_min> <y_min> <x_max> <y_max>`` per line."""
    dets = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 7:
            raise ParseError(path, n, f"expected 7 fields, got {len(parts)}")
        try:
            image_id = str(int(parts[0]))
            cls = int(parts[1])
            conf = float(parts[2])
            box = tuple(float(p) for p in parts[3:])
            det = Detection(image_id, box, conf, cls)
        except ValueError as exc:
            raise ParseError(path, n, str(exc)) from None
        if box[2] <= box[0] or box[3] <= box[1]:
            raise ParseError(path, n, f"degenerate box {box}")
        dets.append(det)
    return dets


def write_predictions(path, detections) -> None:
    Path(path).write_text("".join(
        f"{int(d.image_id):06d} {d.class_id} {d.confidence:.6f} "
        + " ".join(f"{v:.3f}" for v in d.box) + "\n" for d in detections))


def score_predictions_file(predictions_path, dataset_dir, conf_threshold=0.5, iou_threshold=0.5) -> MetricReport:
    dets = [d for d in read_predictions(predictions_path) if d.class_id == FIRE_CLASS]
    return detection_report(dets, read_ground_truths(dataset_dir), conf_threshold, iou_threshold)


# ------------------------------------------------------- image-set evaluation

def generation_report(generated, sources, reals, target_boxes=None, extractor=None,
                      threshold=0.2) -> MetricReport:
    """Table-1-shaped row: FID/KID of generated vs real fire images, mean
    perceptual distance of each generated image to its source, and mean IoU of
    the localized fire against its target box (omitted without boxes)."""
    extractor = extractor or default_extractor()
    fg, fr = features_of(generated, extractor), features_of(reals, extractor)
    perc = float(np.mean([perceptual_distance(g, s, extractor) for g, s in zip(generated, sources)]))
    iou = None
    if target_boxes is not None:
        ious = []
        for g, s, b in zip(generated, sources, target_boxes):
            found = localize_generated_fire(g, s, threshold)
            ious.append(0.0 if found is None else box_iou(found, b))
        iou = float(np.mean(ious))
    return MetricReport(fid=fid_from_features(fg, fr), kid=kid_from_features(fg, fr), perceptual=perc, iou=iou)


def evaluate_dirs(dir_a, dir_b, extractor=None, threshold=0.2) -> MetricReport:
    """FID/KID between two dataset directories; perceptual and IoU when paired."""
    ra, rb = load_dataset(dir_a), load_dataset(dir_b)
    if not ra or not rb:
        raise ValueError("both image sets must be non-empty")
    extractor = extractor or default_extractor()
    a = np.stack([r.image for r in ra])
    b = np.stack([r.image for r in rb])
    fa, fb = features_of(a, extractor), features_of(b, extractor)
    report = MetricReport(fid=fid_from_features(fa, fb))
    if len(a) >= 2 and len(b) >= 2:
        report.kid = kid_from_features(fa, fb)
    if len(a) == len(b) and a.shape == b.shape:
        report.perceptual = float(np.mean([perceptual_distance(x, y, extractor) for x, y in zip(a, b)]))
        ious = []
        for x, y, rec in zip(a, b, ra):
            if rec.boxes:
                found = localize_generated_fire(y, x, threshold)
                ious.append(0.0 if found is None else box_iou(found, rec.boxes[0]))
        if ious:
            report.iou = float(np.mean(ious))
    return report

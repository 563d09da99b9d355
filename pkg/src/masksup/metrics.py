"""Segmentation evaluation: confusion-matrix mIoU and corruption robustness.

Confusion counts are pooled over a whole split (dataset-level mIoU).
Classes absent from both prediction and ground truth have an undefined IoU
(NaN) and are excluded from the mean. Accumulation is a pure function and
associative, so per-image matrices may be computed in parallel and summed.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyEvaluation, LabelOutOfRange
from .maskgen import MaskGenConfig, apply_mask, custom_band, generate_mask
from .seeding import derive_seed


@dataclass
class MetricsReport:
    per_class_iou: np.ndarray  # K floats in [0,1], NaN = undefined
    miou: float
    pixel_accuracy: float
    params: int = 0
    num_images: int = 0


def new_confusion(num_classes: int) -> np.ndarray:
    return np.zeros((num_classes, num_classes), dtype=np.int64)


def accumulate(cm: np.ndarray, pred: np.ndarray, gt: np.ndarray, ignore_label: int | None = None) -> np.ndarray:
    """Return cm plus the counts of this prediction/label pair.

    Entry (i, j) counts pixels with true class i predicted as j; pixels
    labeled ignore_label are excluded. The input matrix is not mutated.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise LabelOutOfRange(f"prediction shape {pred.shape} != label shape {gt.shape}")
    k = cm.shape[0]
    keep = np.ones(gt.shape, dtype=bool) if ignore_label is None else gt != ignore_label
    p, g = pred[keep].ravel(), gt[keep].ravel()
    for name, arr in (("prediction", p), ("label", g)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            bad = arr[(arr < 0) | (arr >= k)][0]
            raise LabelOutOfRange(f"{name} value {bad} outside 0..{k - 1}")
    counts = np.bincount(g * k + p, minlength=k * k).reshape(k, k)
    return cm + counts


def miou(cm: np.ndarray) -> MetricsReport:
    """Per-class IoU and their mean over classes with a nonzero union."""
    diag = np.diag(cm).astype(np.float64)
    union = cm.sum(axis=0) + cm.sum(axis=1) - diag
    iou = np.full(cm.shape[0], np.nan)
    defined = union > 0
    if not defined.any():
        raise EmptyEvaluation("every class has zero union; nothing was evaluated")
    iou[defined] = diag[defined] / union[defined]
    total = cm.sum()
    return MetricsReport(
        per_class_iou=iou,
        miou=float(np.nanmean(iou)),
        pixel_accuracy=float(diag.sum() / total) if total else 0.0,
    )


def evaluate_split(net, samples, num_classes: int, ignore_label: int | None = None) -> MetricsReport:
    """Dataset-level mIoU of a network over a list of samples."""
    from .trainer import infer

    cm = new_confusion(num_classes)
    for s in samples:
        cm = accumulate(cm, infer(net, s.image), s.label, ignore_label)
    report = miou(cm)
    report.num_images = len(samples)
    return report


def robustness_curve(
    net,
    samples,
    coverages: list[float],
    cfg: MaskGenConfig | None = None,
    seed: int = 0,
    ignore_label: int | None = None,
) -> list[tuple[float, float]]:
    """mIoU under test-time masked corruption at each requested coverage.

    Every image gets a fresh mask targeting [c - 0.05, c + 0.05] clamped to
    [0, 1]; coverage 0 evaluates unmasked. Mask seeds derive from (seed,
    coverage index, sample id) only, so two models evaluated with the same
    seed see identical corruptions.
    """
    from .trainer import infer

    num_classes = getattr(net, "num_classes")
    rows = []
    for ci, cov in enumerate(coverages):
        if not 0.0 <= cov < 1.0:
            raise ValueError(f"coverage {cov} outside [0, 1)")
        band = custom_band(max(0.0, cov - 0.05), min(cov + 0.05, 1.0))
        cm = new_confusion(num_classes)
        for s in samples:
            if cov == 0.0:
                image = s.image
            else:
                h, w = s.label.shape
                mask = generate_mask(h, w, band, cfg, derive_seed(seed, "robustness", ci, s.id))
                image = apply_mask(s.image, mask)
            cm = accumulate(cm, infer(net, image), s.label, ignore_label)
        rows.append((float(cov), miou(cm).miou))
    return rows


def write_curve_csv(rows: list[tuple[float, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coverage", "miou"])
        writer.writerows(rows)


def read_curve_csv(path: str | Path) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [(float(c), float(m)) for c, m in reader]


def write_report(report: MetricsReport, path: str | Path) -> None:
    """Serialize a report as flat key = value text."""
    lines = [
        f"miou = {report.miou:.6f}",
        f"pixel_accuracy = {report.pixel_accuracy:.6f}",
        f"params = {report.params}",
        f"num_images = {report.num_images}",
        "per_class_iou = " + ",".join("nan" if np.isnan(v) else f"{v:.6f}" for v in report.per_class_iou),
    ]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_report(path: str | Path) -> MetricsReport:
    fields = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    return MetricsReport(
        per_class_iou=np.array([float(v) for v in fields["per_class_iou"].split(",")]),
        miou=float(fields["miou"]),
        pixel_accuracy=float(fields["pixel_accuracy"]),
        params=int(fields["params"]),
        num_images=int(fields["num_images"]),
    )

"""Synthetic segmentation datasets and image/mask directory ingestion.

Two generators mirror the hard regimes this framework targets: textured
binary blobs with an adjustable boundary-ambiguity knob, and cluttered
multi-class scenes with a geometric class-imbalance profile. Both are pure
functions of their arguments. On-disk datasets follow the layout
root/images/*.png|jpg, root/masks/*.png (stem-matched, mask pixel value =
class index) with optional root/splits/{train,val,test}.txt stem lists.
"""

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .errors import EmptyDataset, LabelOutOfRange, MissingPair

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass
class Sample:
    image: np.ndarray  # H x W x C float32 in [0,1]
    label: np.ndarray  # H x W int64, values in {0..K-1} plus ignore
    id: str


@dataclass
class DatasetSplit:
    train: list[Sample]
    val: list[Sample]
    test: list[Sample]
    num_classes: int
    class_frequencies: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ignore_label: int | None = None

    def all_samples(self) -> list[Sample]:
        return self.train + self.val + self.test


def split_counts(n: int) -> tuple[int, int, int]:
    """70/15/15 split by floor: train = floor(0.7n), val = floor(0.15n), rest test."""
    n_train = int(math.floor(0.7 * n))
    n_val = int(math.floor(0.15 * n))
    return n_train, n_val, n - n_train - n_val


def _measure_frequencies(samples: list[Sample], num_classes: int, ignore_label: int | None) -> np.ndarray:
    counts = np.zeros(num_classes, dtype=np.int64)
    for s in samples:
        labels = s.label if ignore_label is None else s.label[s.label != ignore_label]
        counts += np.bincount(labels.ravel(), minlength=num_classes)[:num_classes]
    total = counts.sum()
    return counts / total if total else counts.astype(float)


def _assemble(samples: list[Sample], num_classes: int, ignore_label: int | None = None) -> DatasetSplit:
    n_train, n_val, _ = split_counts(len(samples))
    split = DatasetSplit(
        train=samples[:n_train],
        val=samples[n_train : n_train + n_val],
        test=samples[n_train + n_val :],
        num_classes=num_classes,
        ignore_label=ignore_label,
    )
    split.class_frequencies = _measure_frequencies(samples, num_classes, ignore_label)
    return split


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _value_noise(rng: np.random.Generator, size: int, cells: int, amp: float) -> np.ndarray:
    grid = rng.normal(0.0, 1.0, (cells, cells))
    rep = int(math.ceil(size / cells))
    up = np.kron(grid, np.ones((rep, rep)))[:size, :size]
    up = gaussian_filter(up, sigma=max(1.0, rep / 2.0))
    return amp * up / (up.std() + 1e-8)


def _blob_mask(size: int, cy: float, cx: float, r0: float, amps: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Filled organic blob: a disc whose radius wobbles with angular harmonics."""
    yy, xx = np.mgrid[0:size, 0:size]
    dy, dx = yy - cy, xx - cx
    dist = np.hypot(dy, dx)
    theta = np.arctan2(dy, dx)
    radius = r0 * (1.0 + sum(a * np.sin((k + 2) * theta + p) for k, (a, p) in enumerate(zip(amps, phases))))
    return dist <= radius


def synth_binary_shapes(n: int, size: int, ambiguity: float, seed: int) -> DatasetSplit:
    """Textured backgrounds with 1-3 foreground blobs of varying scale.

    ambiguity in [0,1] softens the texture transition at the blob boundary;
    at 0 the boundary is a hard edge. Deterministic per seed; 70/15/15 split.
    """
    if n < 10:
        raise ValueError("need at least 10 samples")
    samples = []
    for i in range(n):
        rng = _sample_rng(seed, i)
        label = np.zeros((size, size), dtype=np.int64)
        for _ in range(10):  # resample until both classes present
            label[:] = 0
            for _ in range(int(rng.integers(1, 4))):
                cy, cx = rng.uniform(0.2 * size, 0.8 * size, 2)
                r0 = rng.uniform(size / 8.0, size / 4.0)
                amps = rng.uniform(0.05, 0.25, 3) / np.arange(1, 4)
                phases = rng.uniform(0, 2 * np.pi, 3)
                label[_blob_mask(size, cy, cx, r0, amps, phases)] = 1
            if 0 < label.sum() < label.size:
                break
        bg = rng.uniform(0.10, 0.42, 3)
        fg = rng.uniform(0.58, 0.90, 3)
        soft = label.astype(np.float64)
        if ambiguity > 0:
            soft = gaussian_filter(soft, sigma=ambiguity * size * 0.045)
        image = soft[:, :, None] * fg + (1.0 - soft)[:, :, None] * bg
        image += _value_noise(rng, size, cells=8, amp=0.06)[:, :, None]
        image += rng.normal(0.0, 0.03, image.shape)
        samples.append(Sample(np.clip(image, 0.0, 1.0).astype(np.float32), label, f"bin{i:04d}"))
    return _assemble(samples, num_classes=2)


def _paint_shape(canvas: np.ndarray, rng: np.random.Generator, cls: int, radius: float) -> None:
    size = canvas.shape[0]
    cy, cx = rng.uniform(0, size, 2)
    kind = rng.integers(0, 3)
    if kind == 0:  # disc
        yy, xx = np.mgrid[0:size, 0:size]
        canvas[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2] = cls
    elif kind == 1:  # rotated rectangle
        yy, xx = np.mgrid[0:size, 0:size]
        angle = rng.uniform(0, np.pi)
        a = radius * rng.uniform(0.8, 1.6)
        b = radius * rng.uniform(0.5, 1.0)
        u = (yy - cy) * np.cos(angle) + (xx - cx) * np.sin(angle)
        v = -(yy - cy) * np.sin(angle) + (xx - cx) * np.cos(angle)
        canvas[(np.abs(u) <= a) & (np.abs(v) <= b)] = cls
    else:  # organic blob
        amps = rng.uniform(0.05, 0.3, 3) / np.arange(1, 4)
        phases = rng.uniform(0, 2 * np.pi, 3)
        canvas[_blob_mask(size, cy, cx, radius, amps, phases)] = cls


def _class_palette(num_classes: int) -> np.ndarray:
    k = np.arange(num_classes)[:, None]
    phase = 2 * np.pi * k / num_classes + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    return 0.5 + 0.42 * np.sin(phase)


def synth_multiclass_scenes(n: int, size: int, num_classes: int, imbalance: float, seed: int) -> DatasetSplit:
    """Cluttered scenes where class k's expected pixel share decays as imbalance**-k.

    Classes are painted rarest-last so later shapes occlude earlier ones;
    paint targets are inflated to compensate the expected occlusion, keeping
    realized shares close to the geometric profile. Class 0 is background.
    """
    if n < 10:
        raise ValueError("need at least 10 samples")
    if num_classes < 4:
        raise ValueError("need at least 4 classes")
    if imbalance < 1:
        raise ValueError("imbalance must be >= 1")
    shares = imbalance ** -np.arange(num_classes, dtype=np.float64)
    shares /= shares.sum()
    # paint_target[k] st. realized share ~= shares[k] after later classes overwrite
    paint = np.zeros(num_classes)
    survive = 1.0
    for k in range(num_classes - 1, 0, -1):
        paint[k] = min(0.9, shares[k] / survive)
        survive *= 1.0 - paint[k]
    palette = _class_palette(num_classes)
    samples = []
    for i in range(n):
        rng = _sample_rng(seed, i)
        canvas = np.zeros((size, size), dtype=np.int64)
        for cls in range(1, num_classes):
            target_px = paint[cls] * size * size
            for _ in range(200):
                have = np.count_nonzero(canvas == cls)
                remaining = target_px - have
                if remaining <= 0:
                    break
                radius = math.sqrt(remaining / math.pi) * rng.uniform(0.45, 0.95)
                _paint_shape(canvas, rng, cls, float(np.clip(radius, 1.5, size / 4.0)))
        jitter = rng.uniform(-0.06, 0.06, (num_classes, 3))
        image = np.clip(palette + jitter, 0.04, 0.96)[canvas]
        direction = rng.uniform(0, 2 * np.pi)
        yy, xx = np.mgrid[0:size, 0:size]
        ramp = (yy * np.sin(direction) + xx * np.cos(direction)) / size
        image *= (1.0 + rng.uniform(0.0, 0.3) * (ramp - ramp.mean()))[:, :, None]
        image += _value_noise(rng, size, cells=8, amp=0.05)[:, :, None]
        image += rng.normal(0.0, 0.03, image.shape)
        samples.append(Sample(np.clip(image, 0.0, 1.0).astype(np.float32), canvas, f"mc{i:04d}"))
    return _assemble(samples, num_classes=num_classes)


def _decode_image(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def _decode_mask(path: Path, num_classes: int, ignore_label: int | None) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.int64)
    valid = (arr >= 0) & (arr < num_classes)
    if ignore_label is not None:
        valid |= arr == ignore_label
    if not valid.all():
        bad = int(arr[~valid].flat[0])
        raise LabelOutOfRange(f"mask {path.name} contains label {bad} outside 0..{num_classes - 1}")
    return arr


def load_image_mask_dir(root: str | Path, num_classes: int, ignore_label: int | None = None) -> DatasetSplit:
    """Load stem-matched image/mask pairs from root/images and root/masks.

    Honors root/splits/{train,val,test}.txt when present; otherwise samples
    are ordered by the blake2b hash of their stem and split 70/15/15 with
    the floor rule of split_counts.
    """
    root = Path(root)
    images = {p.stem: p for p in sorted((root / "images").glob("*")) if p.suffix.lower() in IMAGE_SUFFIXES}
    masks = {p.stem: p for p in sorted((root / "masks").glob("*.png"))}
    if not images and not masks:
        raise EmptyDataset(f"no images or masks under {root}")
    for stem in sorted(set(images) ^ set(masks)):
        raise MissingPair(f"unpaired stem {stem!r} (image without mask or mask without image)")
    if not images:
        raise EmptyDataset(f"no usable pairs under {root}")

    def load(stem: str) -> Sample:
        return Sample(_decode_image(images[stem]), _decode_mask(masks[stem], num_classes, ignore_label), stem)

    splits_dir = root / "splits"
    split_files = {name: splits_dir / f"{name}.txt" for name in ("train", "val", "test")}
    if splits_dir.is_dir() and any(f.exists() for f in split_files.values()):
        listed: dict[str, list[str]] = {}
        for name, f in split_files.items():
            stems = [line.strip() for line in f.read_text().splitlines() if line.strip()] if f.exists() else []
            for stem in stems:
                if stem not in images:
                    raise MissingPair(f"split file {f.name} lists unknown stem {stem!r}")
            listed[name] = stems
        split = DatasetSplit(
            train=[load(s) for s in listed["train"]],
            val=[load(s) for s in listed["val"]],
            test=[load(s) for s in listed["test"]],
            num_classes=num_classes,
            ignore_label=ignore_label,
        )
    else:
        stems = sorted(images, key=lambda s: hashlib.blake2b(s.encode()).hexdigest())
        samples = [load(s) for s in stems]
        split = _assemble(samples, num_classes, ignore_label)
        return split
    split.class_frequencies = _measure_frequencies(split.all_samples(), num_classes, ignore_label)
    return split


def save_dataset(split: DatasetSplit, root: str | Path) -> None:
    """Write a split to disk in the images/masks/splits layout."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    (root / "splits").mkdir(parents=True, exist_ok=True)
    for name, samples in (("train", split.train), ("val", split.val), ("test", split.test)):
        for s in samples:
            Image.fromarray((np.clip(s.image, 0, 1) * 255).round().astype(np.uint8)).save(root / "images" / f"{s.id}.png")
            Image.fromarray(s.label.astype(np.uint8)).save(root / "masks" / f"{s.id}.png")
        (root / "splits" / f"{name}.txt").write_text("".join(s.id + "\n" for s in samples))

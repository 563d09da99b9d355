"""Training loop, single-pass inference, and checkpointing.

One training step: every image in the batch gets a fresh occlusion mask
(seed derived from the run seed, epoch, step and sample id), both the clean
and masked inputs pass through the one shared network, and the combined
loss updates the shared parameters once. In baseline mode the masked branch
and mask generation are skipped entirely. At test time images are never
masked; infer is a single forward pass plus an argmax.
"""

import csv
import hashlib
import io
import json
import time
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import maskgen
from .config import TrainConfig
from .errors import ChecksumMismatch, ConfigError, NonFiniteLoss
from .losses import LossBundle, total_loss
from .models import UNet, build_reference_unet, image_to_tensor, siamese_forward
from .seeding import derive_seed


@dataclass
class TrainReport:
    steps: list[tuple[int, LossBundle]]
    val_history: list[tuple[int, float]]
    epoch_seconds: list[float]
    best_checkpoint: Path
    last_checkpoint: Path
    best_val_miou: float
    config: TrainConfig


def mask_seed(run_seed: int, epoch: int, step: int, sample_id: str) -> int:
    """Seed of the fresh mask drawn for one sample at one training step."""
    return derive_seed(run_seed, "mask", epoch, step, sample_id)


def _batch_tensors(samples, cfg: TrainConfig, epoch: int, step: int):
    images = np.stack([s.image for s in samples])
    labels = torch.from_numpy(np.stack([s.label for s in samples]).astype(np.int64))
    x = torch.from_numpy(images.transpose(0, 3, 1, 2))
    if cfg.mode == "baseline":
        return x, None, labels, None
    regime = cfg.mask_regime()
    masked, keeps = [], []
    for s in samples:
        h, w = s.label.shape
        mask = maskgen.generate_mask(h, w, regime, seed=mask_seed(cfg.seed, epoch, step, s.id))
        masked.append(maskgen.apply_mask(s.image, mask))
        keeps.append(mask.data)
    xm = torch.from_numpy(np.stack(masked).transpose(0, 3, 1, 2))
    keep = torch.from_numpy(np.stack(keeps)) if cfg.context_masked_pixels_only else None
    return x, xm, labels, keep


def train(cfg: TrainConfig, data, out_dir: str | Path) -> TrainReport:
    """Run the configured training arm over a DatasetSplit.

    Writes losses.csv (per step), epochs.csv (per epoch), and best/last
    checkpoints under out_dir. Model selection is by validation mIoU; with
    an empty validation split the final weights double as best.
    """
    from .metrics import evaluate_split

    cfg.validate()
    if not data.train:
        raise ConfigError("training split is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(derive_seed(cfg.seed, "torch"))

    net = build_reference_unet(data.num_classes, cfg.base_width, cfg.depth, seed=cfg.seed)
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    weights = cfg.loss_weights()

    steps: list[tuple[int, LossBundle]] = []
    val_history: list[tuple[int, float]] = []
    epoch_seconds: list[float] = []
    best_miou = -1.0
    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"
    global_step = 0

    for epoch in range(cfg.epochs):
        t0 = time.time()
        order = np.random.default_rng(derive_seed(cfg.seed, "shuffle", epoch)).permutation(len(data.train))
        net.train()
        for start in range(0, len(order), cfg.batch_size):
            batch = [data.train[i] for i in order[start : start + cfg.batch_size]]
            x, xm, labels, keep = _batch_tensors(batch, cfg, epoch, global_step)
            if xm is None:
                m_p, m_pm = net(x), None
            else:
                m_p, m_pm = siamese_forward(net, x, xm)
            total, bundle = total_loss(
                m_p, m_pm, labels, weights, cfg.ignore_label, keep, cfg.context_masked_pixels_only
            )
            if not np.isfinite(bundle.total):
                raise NonFiniteLoss(global_step)
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            steps.append((global_step, bundle))
            global_step += 1
            if cfg.checkpoint_every and global_step % cfg.checkpoint_every == 0:
                save_checkpoint(net, cfg, global_step, last_path)
        net.eval()
        if data.val:
            val_miou = evaluate_split(net, data.val, data.num_classes, cfg.ignore_label).miou
            val_history.append((epoch, val_miou))
            if val_miou > best_miou:
                best_miou = val_miou
                save_checkpoint(net, cfg, global_step, best_path)
        epoch_seconds.append(time.time() - t0)

    save_checkpoint(net, cfg, global_step, last_path)
    if best_miou < 0:
        save_checkpoint(net, cfg, global_step, best_path)
    _write_history(steps, val_history, epoch_seconds, out_dir)
    return TrainReport(steps, val_history, epoch_seconds, best_path, last_path, best_miou, cfg)


def _write_history(steps, val_history, epoch_seconds, out_dir: Path) -> None:
    with open(out_dir / "losses.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "seg", "context", "tasksim", "total"])
        for step, b in steps:
            writer.writerow([step, f"{b.seg:.8f}", f"{b.context:.8f}", f"{b.tasksim:.8f}", f"{b.total:.8f}"])
    with open(out_dir / "epochs.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "val_miou", "seconds"])
        for (epoch, miou), secs in zip(val_history, epoch_seconds):
            writer.writerow([epoch, f"{miou:.6f}", f"{secs:.3f}"])


def infer(net: UNet, image: np.ndarray) -> np.ndarray:
    """Predicted label map from one unmasked forward pass.

    Argmax over the class channel; ties break toward the lower class index.
    """
    with torch.no_grad():
        logits = net(image_to_tensor(image))
    return np.argmax(logits[0].numpy(), axis=0).astype(np.int64)


def _checksum(manifest_core: dict, params: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(manifest_core, sort_keys=True).encode())
    for name in sorted(params):
        arr = params[name]
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(repr(arr.shape).encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def save_checkpoint(net: UNet, cfg: TrainConfig | None, step: int, path: str | Path) -> None:
    """Write parameters plus a manifest to a single npz archive.

    The manifest records the backbone construction arguments, the training
    step, the full train config when given, and a sha256 over everything,
    so corruption surfaces as ChecksumMismatch on load.
    """
    params = {name: tensor.detach().cpu().numpy() for name, tensor in net.state_dict().items()}
    manifest = {
        "backbone_id": net.backbone_id,
        "num_classes": net.num_classes,
        "base_width": net.base_width,
        "depth": net.depth,
        "in_channels": net.in_channels,
        "seed": net.seed,
        "step": int(step),
        "train_config": cfg.to_dict() if cfg is not None else None,
    }
    manifest["checksum"] = _checksum(manifest, params)
    buffer = io.BytesIO()
    np.savez(buffer, __manifest__=np.array(json.dumps(manifest)), **{f"param/{k}": v for k, v in params.items()})
    Path(path).write_bytes(buffer.getvalue())


def load_checkpoint(path: str | Path) -> tuple[UNet, dict, int]:
    """Rebuild the network from a checkpoint; bit-exact parameter restore."""
    try:
        with np.load(path, allow_pickle=False) as archive:
            manifest = json.loads(str(archive["__manifest__"]))
            params = {key[len("param/") :]: archive[key] for key in archive.files if key.startswith("param/")}
    except (OSError, ValueError, KeyError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise ChecksumMismatch(f"unreadable checkpoint {path}: {exc}") from exc
    stated = manifest.pop("checksum", None)
    if stated != _checksum(manifest, params):
        raise ChecksumMismatch(f"checksum mismatch in {path}")
    net = build_reference_unet(
        manifest["num_classes"],
        manifest["base_width"],
        manifest["depth"],
        seed=manifest["seed"],
        in_channels=manifest["in_channels"],
    )
    net.load_state_dict({name: torch.from_numpy(arr.copy()) for name, arr in params.items()})
    net.eval()
    return net, manifest, int(manifest["step"])

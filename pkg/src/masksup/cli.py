"""Command-line entry point for the full experiment lifecycle.

Subcommands: train, eval, preview-masks, robustness, plots, synth-data.
Exit codes: 0 success, 2 usage/config error, 3 runtime numeric failure.
"""

import sys
import time
from pathlib import Path

import click
import numpy as np
from PIL import Image

from . import data as data_mod
from . import maskgen
from .config import TrainConfig, build_train_config, make_dataset, write_config
from .errors import ConfigError, MaskSupError, NonFiniteLoss
from .metrics import evaluate_split, robustness_curve, write_curve_csv, write_report
from .models import parameter_count
from .plots import load_run_dir, plot_loss_curves, plot_miou_bars, plot_robustness, run_dataset_tag
from .trainer import load_checkpoint, train


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    try:
        fn()
    except NonFiniteLoss as exc:
        _fail(str(exc), 3)
    except ConfigError as exc:
        _fail(str(exc), 2)
    except MaskSupError as exc:
        _fail(str(exc), 2)


def _dataset_options(fn):
    options = [
        click.option("--dataset", type=click.Choice(["binary", "multiclass", "dir"]), default=None),
        click.option("--dataset-n", type=int, default=None),
        click.option("--image-size", type=int, default=None),
        click.option("--num-classes", type=int, default=None),
        click.option("--ambiguity", type=float, default=None),
        click.option("--imbalance", type=float, default=None),
        click.option("--dataset-seed", type=int, default=None),
        click.option("--data-root", type=click.Path(), default=None),
        click.option("--ignore-label", type=int, default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _collect_overrides(**flags) -> dict:
    return {key: value for key, value in flags.items() if value is not None}


@click.group()
def main():
    """Masked supervised learning for semantic segmentation."""


@main.command(name="train")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--mode", type=click.Choice(["baseline", "cb", "masksup"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--regime", type=click.Choice(["high", "low"]), default=None)
@_dataset_options
@click.option("--set", "extra", multiple=True, help="Override any config key: --set key=value")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Run directory (default runs/<hash>-<time>)")
def cmd_train(config_path, extra, out_dir, **flags):
    """Train one arm and write logs, checkpoints and the test report."""

    def body():
        overrides = _collect_overrides(**flags)
        for item in extra:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        cfg = build_train_config(config_path, overrides)
        run_dir = Path(out_dir) if out_dir else Path("runs") / f"{cfg.config_hash()}-{time.strftime('%Y%m%d-%H%M%S')}"
        run_dir.mkdir(parents=True, exist_ok=True)
        write_config(cfg, run_dir / "config.txt")
        dataset = make_dataset(cfg)
        click.echo(f"training mode={cfg.mode} seed={cfg.seed} -> {run_dir}")
        report = train(cfg, dataset, run_dir)
        net, _, _ = load_checkpoint(report.best_checkpoint)
        test_report = evaluate_split(net, dataset.test or dataset.val or dataset.train, dataset.num_classes, cfg.ignore_label)
        test_report.params = parameter_count(net)
        write_report(test_report, run_dir / "report.txt")
        click.echo(f"best val mIoU {report.best_val_miou:.4f}, test mIoU {test_report.miou:.4f}")
        click.echo(f"run directory: {run_dir}")

    _guarded(body)


def _dataset_from_flags(manifest_cfg: dict | None, flags: dict) -> tuple:
    base = {key: value for key, value in (manifest_cfg or {}).items() if value is not None}
    base.update(_collect_overrides(**flags))
    cfg = TrainConfig(**{key: value for key, value in base.items() if key in TrainConfig.__dataclass_fields__})
    cfg.validate()
    return make_dataset(cfg), cfg


@main.command(name="eval")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@_dataset_options
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Report file (default <ckpt dir>/report.txt)")
def cmd_eval(checkpoint, split, out_path, **flags):
    """Evaluate a checkpoint: per-class IoU, mIoU, parameter count."""

    def body():
        net, manifest, _ = load_checkpoint(checkpoint)
        dataset, cfg = _dataset_from_flags(manifest.get("train_config"), flags)
        samples = getattr(dataset, split)
        report = evaluate_split(net, samples, dataset.num_classes, cfg.ignore_label)
        report.params = parameter_count(net)
        click.echo(f"split: {split} ({report.num_images} images)")
        for idx, iou in enumerate(report.per_class_iou):
            click.echo(f"  class {idx}: IoU {'undefined' if np.isnan(iou) else f'{iou:.4f}'}")
        click.echo(f"mIoU: {report.miou:.4f}  pixel accuracy: {report.pixel_accuracy:.4f}  params: {report.params}")
        target = Path(out_path) if out_path else Path(checkpoint).parent / "report.txt"
        write_report(report, target)
        click.echo(f"wrote {target}")

    _guarded(body)


@main.command(name="preview-masks")
@click.option("--height", type=int, default=64)
@click.option("--width", type=int, default=64)
@click.option("--regime", type=click.Choice(["high", "low"]), default="high")
@click.option("--count", type=int, default=8)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), default="previews", show_default=True)
def cmd_preview_masks(height, width, regime, count, seed, out_dir):
    """Write sample masks and masked images as 8-bit PNG files."""

    def body():
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        size = max(height, width)
        samples = data_mod.synth_binary_shapes(max(10, count), size, ambiguity=0.3, seed=seed).all_samples()
        reg = maskgen.regime_from_name(regime)
        for i in range(count):
            mask = maskgen.generate_mask(height, width, reg, seed=seed + i)
            Image.fromarray(mask.data * np.uint8(255), mode="L").save(out / f"mask_{i:03d}.png")
            image = samples[i % len(samples)].image[:height, :width]
            masked = maskgen.apply_mask(image, mask)
            Image.fromarray((masked * 255).round().astype(np.uint8)).save(out / f"masked_{i:03d}.png")
        click.echo(f"wrote {count} mask/masked pairs to {out}")

    _guarded(body)


@main.command(name="robustness")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--coverages", default="0,0.25,0.5,0.7", show_default=True, help="Comma-separated coverages in [0,1)")
@click.option("--seed", type=int, default=0)
@_dataset_options
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Output directory (default checkpoint dir)")
def cmd_robustness(checkpoint, coverages, seed, out_dir, **flags):
    """Sweep test-time masked corruption and write the mIoU curve (CSV + plot)."""

    def body():
        try:
            levels = [float(c) for c in coverages.split(",") if c.strip() != ""]
        except ValueError:
            raise ConfigError(f"cannot parse coverages {coverages!r}") from None
        net, manifest, _ = load_checkpoint(checkpoint)
        dataset, cfg = _dataset_from_flags(manifest.get("train_config"), flags)
        rows = robustness_curve(net, dataset.test, levels, seed=seed, ignore_label=cfg.ignore_label)
        out = Path(out_dir) if out_dir else Path(checkpoint).parent
        out.mkdir(parents=True, exist_ok=True)
        write_curve_csv(rows, out / "robustness.csv")
        plot_robustness(rows, out / "robustness.png")
        for cov, value in rows:
            click.echo(f"coverage {cov:.2f}: mIoU {value:.4f}")
        click.echo(f"wrote {out / 'robustness.csv'} and {out / 'robustness.png'}")

    _guarded(body)


@main.command(name="plots")
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", type=click.Path(), default="plots", show_default=True)
def cmd_plots(run_dirs, out_dir):
    """Render loss curves per run and grouped test-mIoU bars per dataset."""

    def body():
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        groups: dict[str, list[tuple[str, float]]] = {}
        for run_dir in run_dirs:
            info = load_run_dir(run_dir)
            if info["losses"]:
                plot_loss_curves(info["losses"], out / f"loss_{info['name']}.png", title=info["name"])
            if info["report"] is not None:
                tag = run_dataset_tag(info["config"])
                label = info["config"].get("mode", info["name"])
                groups.setdefault(tag, []).append((f"{label}/{info['name']}", info["report"].miou))
        for tag, entries in groups.items():
            plot_miou_bars(entries, out / f"miou_{tag}.png", title=tag)
        click.echo(f"wrote {len(run_dirs)} loss curves and {len(groups)} bar charts to {out}")

    _guarded(body)


@main.command(name="synth-data")
@click.option("--kind", type=click.Choice(["binary", "multiclass"]), default="binary", show_default=True)
@click.option("--n", type=int, default=100, show_default=True)
@click.option("--size", type=int, default=64, show_default=True)
@click.option("--num-classes", type=int, default=6, show_default=True)
@click.option("--ambiguity", type=float, default=0.3, show_default=True)
@click.option("--imbalance", type=float, default=3.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def cmd_synth_data(kind, n, size, num_classes, ambiguity, imbalance, seed, out_dir):
    """Generate a synthetic dataset on disk in the images/masks/splits layout."""

    def body():
        if kind == "binary":
            split = data_mod.synth_binary_shapes(n, size, ambiguity, seed)
        else:
            split = data_mod.synth_multiclass_scenes(n, size, num_classes, imbalance, seed)
        data_mod.save_dataset(split, out_dir)
        click.echo(f"wrote {n} samples ({kind}, K={split.num_classes}) to {out_dir}")

    _guarded(body)


if __name__ == "__main__":
    main()

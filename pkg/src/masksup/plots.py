"""Static figure rendering for run directories and robustness sweeps.

Everything renders through the Agg backend straight to files; no display
server is needed.
"""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .config import parse_config_text

LOSS_COLUMNS = ("seg", "context", "tasksim", "total")


def read_losses_csv(path: str | Path) -> dict[str, list[float]]:
    columns: dict[str, list[float]] = {"step": []}
    for name in LOSS_COLUMNS:
        columns[name] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            columns["step"].append(float(row["step"]))
            for name in LOSS_COLUMNS:
                columns[name].append(float(row[name]))
    return columns


def plot_loss_curves(losses: dict[str, list[float]], out_path: str | Path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in LOSS_COLUMNS:
        ax.plot(losses["step"], losses[name], label=name, linewidth=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_robustness(rows: list[tuple[float, float]], out_path: str | Path, title: str = "masked corruption robustness") -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot([c for c, _ in rows], [m for _, m in rows], marker="o")
    ax.set_xlabel("masked coverage")
    ax.set_ylabel("mIoU")
    ax.set_ylim(0, 1)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_miou_bars(entries: list[tuple[str, float]], out_path: str | Path, title: str) -> None:
    """Grouped bar chart of test mIoU per run (one chart per dataset)."""
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(entries), 4))
    labels = [label for label, _ in entries]
    values = [value for _, value in entries]
    bars = ax.bar(range(len(entries)), values, color="tab:blue", width=0.6)
    ax.set_xticks(range(len(entries)), labels, rotation=20, ha="right")
    ax.set_ylabel("test mIoU")
    ax.set_ylim(0, 1)
    ax.set_title(title)
    ax.bar_label(bars, fmt="%.3f", padding=2, fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def run_dataset_tag(config_values: dict[str, str]) -> str:
    """Short dataset identity used to group runs into one bar chart."""
    kind = config_values.get("dataset", "binary")
    if kind == "dir":
        return "dir-" + Path(config_values.get("data_root", "")).name
    tag = f"{kind}-n{config_values.get('dataset_n')}-s{config_values.get('image_size')}"
    if kind == "multiclass":
        tag += f"-k{config_values.get('num_classes')}"
    return tag


def load_run_dir(run_dir: str | Path) -> dict:
    """Collect the pieces of a training run directory used by the plotters."""
    from .metrics import read_report

    run_dir = Path(run_dir)
    info: dict = {"name": run_dir.name, "dir": run_dir}
    config_path = run_dir / "config.txt"
    info["config"] = parse_config_text(config_path.read_text()) if config_path.exists() else {}
    losses_path = run_dir / "losses.csv"
    info["losses"] = read_losses_csv(losses_path) if losses_path.exists() else None
    report_path = run_dir / "report.txt"
    info["report"] = read_report(report_path) if report_path.exists() else None
    return info

"""Training configuration: dataclass, flat key = value config files, overrides.

Config files are plain text, one `key = value` per line, # comments allowed
(a flat TOML-compatible subset). CLI flags override file values. Unknown
keys are rejected by name.
"""

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .losses import LossWeights
from .maskgen import MaskRegime, regime_from_name

MODES = ("baseline", "cb", "masksup")

# Default loss weights per training arm: (a1, a2, a3).
MODE_WEIGHTS = {"baseline": (1.0, 0.0, 0.0), "cb": (1.0, 1.0, 0.0), "masksup": (1.0, 1.0, 1.0)}


@dataclass
class TrainConfig:
    mode: str = "masksup"
    alpha1: float | None = None  # None: resolved from mode
    alpha2: float | None = None
    alpha3: float | None = None
    regime: str = "high"
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    checkpoint_every: int = 0  # steps between rolling checkpoints; 0 = best/last only
    base_width: int = 16
    depth: int = 3
    context_masked_pixels_only: bool = False
    ignore_label: int | None = None
    dataset: str = "binary"  # binary | multiclass | dir
    dataset_n: int = 200
    image_size: int = 64
    num_classes: int = 6  # multiclass and dir datasets; binary is always 2
    ambiguity: float = 0.3
    imbalance: float = 3.0
    dataset_seed: int = 0
    data_root: str = ""

    def loss_weights(self) -> LossWeights:
        defaults = MODE_WEIGHTS[self.mode]
        picked = tuple(d if a is None else a for a, d in zip((self.alpha1, self.alpha2, self.alpha3), defaults))
        return LossWeights(*picked)

    def mask_regime(self) -> MaskRegime:
        return regime_from_name(self.regime)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        try:
            w = self.loss_weights()
            self.mask_regime()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.mode == "baseline" and (w.alpha2 != 0 or w.alpha3 != 0):
            raise ConfigError("baseline mode requires alpha2 = alpha3 = 0")
        if self.mode == "cb" and (w.alpha2 <= 0 or w.alpha3 != 0):
            raise ConfigError("cb mode requires alpha2 > 0 and alpha3 = 0")
        if self.mode == "masksup" and (w.alpha2 <= 0 or w.alpha3 <= 0):
            raise ConfigError("masksup mode requires alpha2 > 0 and alpha3 > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.dataset not in ("binary", "multiclass", "dir"):
            raise ConfigError(f"dataset must be binary, multiclass or dir, got {self.dataset!r}")
        if self.dataset == "dir" and not self.data_root:
            raise ConfigError("dataset = dir requires data_root")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        digest = hashlib.blake2b(repr(sorted(self.to_dict().items())).encode(), digest_size=4)
        return digest.hexdigest()


def _parse_value(field: dataclasses.Field, raw: str):
    text = raw.strip().strip("\"'")
    base = {"mode": str, "regime": str, "dataset": str, "data_root": str}.get(field.name)
    if base is str:
        return text
    if field.type in ("bool",):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{field.name}: expected a boolean, got {raw!r}")
    if text.lower() in ("none", ""):
        return None
    try:
        if field.type in ("int", "int | None"):
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"{field.name}: cannot parse {raw!r}") from None


def parse_config_text(text: str) -> dict[str, str]:
    """Flat key = value lines to a raw string dict; rejects malformed lines."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def build_train_config(path: str | Path | None = None, overrides: dict[str, object] | None = None) -> TrainConfig:
    """Resolve a TrainConfig from an optional file plus override values.

    Overrides take precedence over the file. Unknown keys raise ConfigError
    naming the key.
    """
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    values: dict[str, object] = {}
    if path is not None:
        for key, raw in parse_config_text(Path(path).read_text()).items():
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _parse_value(fields[key], raw)
    for key, value in (overrides or {}).items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _parse_value(fields[key], str(value)) if isinstance(value, str) else value
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg


def write_config(cfg: TrainConfig, path: str | Path) -> None:
    lines = []
    for key, value in cfg.to_dict().items():
        lines.append(f"{key} = {'none' if value is None else value}")
    Path(path).write_text("".join(line + "\n" for line in lines))


def make_dataset(cfg: TrainConfig):
    """Build the dataset a config describes."""
    from . import data

    if cfg.dataset == "binary":
        return data.synth_binary_shapes(cfg.dataset_n, cfg.image_size, cfg.ambiguity, cfg.dataset_seed)
    if cfg.dataset == "multiclass":
        return data.synth_multiclass_scenes(cfg.dataset_n, cfg.image_size, cfg.num_classes, cfg.imbalance, cfg.dataset_seed)
    return data.load_image_mask_dir(cfg.data_root, cfg.num_classes, cfg.ignore_label)

"""Free-form occlusion masks: random streaks and filled holes.

A mask is a binary H x W grid where 1 keeps a pixel and 0 removes it.
Generation composites random polyline strokes (random walks with bounded
turn angles) and filled discs until a sampled target coverage inside the
requested band is reached, and rejection-resamples the whole mask with a
derived sub-seed whenever the final fraction misses the band. Coverage is
never fixed up by flipping individual pixels, so shape statistics stay
free-form.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoverageUnreachable, ShapeMismatch

# Stroke geometry: segment count and per-segment turn limit of the random walk.
STROKE_SEGMENTS = (8, 24)
STROKE_MAX_TURN = math.pi / 3.0

# Safety cap on drawing rounds per attempt (guards against configs whose
# shapes stop removing new pixels).
_MAX_ROUNDS = 64

# Pixel-removal fraction counted per generate_mask call (instrumentation for
# the zero-inference-cost checks).
_generate_calls = 0


def generation_count() -> int:
    """Number of generate_mask calls made in this process."""
    return _generate_calls


@dataclass(frozen=True)
class MaskRegime:
    """A named coverage band: the closed interval the masked fraction must hit."""

    name: str
    band: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.band
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"invalid coverage band {self.band}")
        if self.name == "high" and hi <= 0.5:
            raise ValueError("a high regime band must include fractions > 0.5")
        if self.name == "low" and hi >= 0.5:
            raise ValueError("a low regime band must stay below 0.5")


HIGH_REGIME = MaskRegime("high", (0.50, 0.75))
LOW_REGIME = MaskRegime("low", (0.10, 0.35))


def regime_from_name(name: str) -> MaskRegime:
    try:
        return {"high": HIGH_REGIME, "low": LOW_REGIME}[name.lower()]
    except KeyError:
        raise ValueError(f"unknown mask regime {name!r} (expected 'high' or 'low')") from None


def custom_band(lo: float, hi: float) -> MaskRegime:
    """Ad-hoc regime for arbitrary coverage bands (robustness sweeps)."""
    return MaskRegime("band", (lo, hi))


def validate_regime_pair(low: MaskRegime, high: MaskRegime) -> None:
    """The low band must lie strictly below the high band without overlap."""
    if low.band[1] >= high.band[0]:
        raise ValueError(f"low band {low.band} overlaps or touches high band {high.band}")


@dataclass(frozen=True)
class MaskGenConfig:
    """Knobs for the stroke/hole compositor.

    Ranges are inclusive. The stroke/hole counts bound how many shapes one
    attempt may draw; widths and radii are in pixels. Defaults are tuned for
    64-160 px images; for much larger images pass wider strokes.
    """

    num_strokes_range: tuple[int, int] = (4, 12)
    stroke_width_range: tuple[int, int] = (2, 7)
    num_holes_range: tuple[int, int] = (2, 8)
    hole_radius_range: tuple[int, int] = (2, 7)
    max_resample_attempts: int = 100

    def __post_init__(self):
        for name in ("num_strokes_range", "stroke_width_range", "num_holes_range", "hole_radius_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must be a non-empty non-negative interval, got ({lo}, {hi})")
        if self.max_resample_attempts < 1:
            raise ValueError("max_resample_attempts must be >= 1")


@dataclass
class HoleMask:
    """Binary keep/remove grid; data[y, x] == 0 marks a removed pixel."""

    height: int
    width: int
    data: np.ndarray

    @classmethod
    def from_array(cls, data: np.ndarray) -> "HoleMask":
        data = np.asarray(data, dtype=np.uint8)
        if data.ndim != 2:
            raise ValueError("mask data must be 2-D")
        if not np.isin(data, (0, 1)).all():
            raise ValueError("mask cells must be exactly 0 or 1")
        return cls(height=data.shape[0], width=data.shape[1], data=data)

    @classmethod
    def ones(cls, height: int, width: int) -> "HoleMask":
        return cls(height, width, np.ones((height, width), dtype=np.uint8))


def masked_fraction(mask: HoleMask) -> float:
    """Share of removed (zero) cells in the mask."""
    return float(np.count_nonzero(mask.data == 0)) / float(mask.height * mask.width)


def _paint_capsule(grid: np.ndarray, y0: float, x0: float, y1: float, x1: float, radius: float) -> int:
    """Zero all cells within `radius` of the segment (y0,x0)-(y1,x1).

    Returns the number of newly removed cells.
    """
    h, w = grid.shape
    ylo = max(0, int(math.floor(min(y0, y1) - radius)))
    yhi = min(h, int(math.ceil(max(y0, y1) + radius)) + 1)
    xlo = max(0, int(math.floor(min(x0, x1) - radius)))
    xhi = min(w, int(math.ceil(max(x0, x1) + radius)) + 1)
    if ylo >= yhi or xlo >= xhi:
        return 0
    yy, xx = np.ogrid[ylo:yhi, xlo:xhi]
    dy, dx = y1 - y0, x1 - x0
    seg_len2 = dy * dy + dx * dx
    if seg_len2 == 0.0:
        py, px = y0, x0
    else:
        t = np.clip(((yy - y0) * dy + (xx - x0) * dx) / seg_len2, 0.0, 1.0)
        py, px = y0 + t * dy, x0 + t * dx
    hit = (yy - py) ** 2 + (xx - px) ** 2 <= radius * radius
    window = grid[ylo:yhi, xlo:xhi]
    removed = int(np.count_nonzero(window[hit]))
    window[hit] = 0
    return removed


def _draw_stroke(grid: np.ndarray, rng: np.random.Generator, width_range: tuple[int, int]) -> int:
    h, w = grid.shape
    min_dim = min(h, w)
    segments = int(rng.integers(STROKE_SEGMENTS[0], STROKE_SEGMENTS[1] + 1))
    thickness = int(rng.integers(width_range[0], width_range[1] + 1))
    radius = max(0.5, thickness / 2.0)
    y = rng.uniform(0.1 * h, 0.9 * h)
    x = rng.uniform(0.1 * w, 0.9 * w)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    removed = 0
    for _ in range(segments):
        heading += rng.uniform(-STROKE_MAX_TURN, STROKE_MAX_TURN)
        length = rng.uniform(min_dim / 16.0, min_dim / 5.0)
        ny = y + length * math.sin(heading)
        nx = x + length * math.cos(heading)
        removed += _paint_capsule(grid, y, x, ny, nx, radius)
        y, x = ny, nx
    return removed


def _draw_hole(grid: np.ndarray, rng: np.random.Generator, radius_range: tuple[int, int]) -> int:
    h, w = grid.shape
    radius = float(rng.uniform(radius_range[0], radius_range[1]))
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    return _paint_capsule(grid, cy, cx, cy, cx, radius)


def generate_mask(
    height: int,
    width: int,
    regime: MaskRegime,
    cfg: MaskGenConfig | None = None,
    seed: int = 0,
) -> HoleMask:
    """Generate a free-form mask whose masked fraction lies in regime.band.

    Deterministic in all arguments: attempt i uses the sub-seed spawned from
    (seed, i), so retries never depend on call order or process state.

    Raises CoverageUnreachable when max_resample_attempts attempts all miss
    the band, which signals an incompatible cfg/band combination.
    """
    global _generate_calls
    _generate_calls += 1
    if height < 8 or width < 8:
        raise ValueError("mask dimensions must be at least 8x8")
    if cfg is None:
        cfg = MaskGenConfig()
    lo, hi = regime.band
    total = height * width
    for attempt in range(cfg.max_resample_attempts):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(attempt,)))
        target = rng.uniform(lo, hi)
        grid = np.ones((height, width), dtype=np.uint8)
        removed = 0
        # Shape-count ranges set the stroke/hole mix of one drawing round;
        # rounds repeat until the target coverage is reached, so any band is
        # reachable at any image size as long as the round is non-empty.
        for _ in range(_MAX_ROUNDS):
            if removed / total >= target:
                break
            n_strokes = int(rng.integers(cfg.num_strokes_range[0], cfg.num_strokes_range[1] + 1))
            n_holes = int(rng.integers(cfg.num_holes_range[0], cfg.num_holes_range[1] + 1))
            batch = ["stroke"] * n_strokes + ["hole"] * n_holes
            if not batch:
                break
            rng.shuffle(batch)
            for shape in batch:
                if removed / total >= target:
                    break
                if shape == "stroke":
                    removed += _draw_stroke(grid, rng, cfg.stroke_width_range)
                else:
                    removed += _draw_hole(grid, rng, cfg.hole_radius_range)
        frac = removed / total
        if lo <= frac <= hi:
            return HoleMask(height, width, grid)
    raise CoverageUnreachable(
        f"no mask with coverage in [{lo}, {hi}] after {cfg.max_resample_attempts} attempts "
        f"({height}x{width}, cfg={cfg})"
    )


def apply_mask(image: np.ndarray, mask: HoleMask) -> np.ndarray:
    """Element-wise product of image and mask; removed pixels become exactly 0.

    One spatial mask is broadcast across all channels. Accepts H x W or
    H x W x C images.
    """
    image = np.asarray(image)
    if image.shape[:2] != (mask.height, mask.width):
        raise ShapeMismatch(
            f"image spatial shape {image.shape[:2]} != mask shape {(mask.height, mask.width)}"
        )
    m = mask.data if image.ndim == 2 else mask.data[:, :, None]
    return image * m.astype(image.dtype)

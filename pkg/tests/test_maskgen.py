import numpy as np
import pytest

from masksup.errors import CoverageUnreachable, ShapeMismatch
from masksup.maskgen import (
    HIGH_REGIME,
    LOW_REGIME,
    HoleMask,
    MaskGenConfig,
    MaskRegime,
    apply_mask,
    custom_band,
    generate_mask,
    masked_fraction,
    validate_regime_pair,
)


def zero_fraction(mask):
    # independent of masked_fraction: direct zero-cell count
    return float((mask.data == 0).sum()) / mask.data.size


class TestGenerateMask:
    def test_high_band_seed7(self):
        mask = generate_mask(64, 64, HIGH_REGIME, seed=7)
        assert 0.50 <= zero_fraction(mask) <= 0.75

    def test_low_band_seed7(self):
        mask = generate_mask(64, 64, LOW_REGIME, seed=7)
        assert 0.10 <= zero_fraction(mask) <= 0.35

    def test_degenerate_empty_composition(self):
        cfg = MaskGenConfig(num_strokes_range=(0, 0), num_holes_range=(0, 0))
        mask = generate_mask(64, 64, custom_band(0.0, 0.0), cfg, seed=3)
        assert mask.data.all()

    def test_cells_are_binary(self):
        for seed in range(5):
            mask = generate_mask(48, 80, HIGH_REGIME, seed=seed)
            assert set(np.unique(mask.data)) <= {0, 1}
            assert (mask.height, mask.width) == (48, 80)

    def test_deterministic(self):
        a = generate_mask(64, 64, HIGH_REGIME, seed=11)
        b = generate_mask(64, 64, HIGH_REGIME, seed=11)
        assert np.array_equal(a.data, b.data)

    def test_seed_changes_mask(self):
        a = generate_mask(64, 64, HIGH_REGIME, seed=0)
        b = generate_mask(64, 64, HIGH_REGIME, seed=1)
        assert not np.array_equal(a.data, b.data)

    def test_coverage_contract(self):
        # acceptance runs the full 1000; this is the fast smoke version
        for seed in range(100):
            assert 0.50 <= zero_fraction(generate_mask(64, 64, HIGH_REGIME, seed=seed)) <= 0.75

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            generate_mask(4, 64, HIGH_REGIME, seed=0)

    def test_unreachable_band(self):
        cfg = MaskGenConfig(num_strokes_range=(0, 0), num_holes_range=(0, 0), max_resample_attempts=5)
        with pytest.raises(CoverageUnreachable):
            generate_mask(64, 64, custom_band(0.3, 0.4), cfg, seed=0)


class TestApplyMask:
    def test_identity_mask(self):
        rng = np.random.default_rng(0)
        image = rng.uniform(0, 1, (16, 16, 3)).astype(np.float32)
        out = apply_mask(image, HoleMask.ones(16, 16))
        assert np.array_equal(out, image)

    def test_annihilator_mask(self):
        rng = np.random.default_rng(1)
        image = rng.uniform(0, 1, (16, 16, 3)).astype(np.float32)
        mask = HoleMask.from_array(np.zeros((16, 16), dtype=np.uint8))
        assert not apply_mask(image, mask).any()

    def test_elementwise_product(self):
        image = np.array([[0.5, 0.2], [0.9, 0.1]], dtype=np.float32)
        mask = HoleMask.from_array(np.array([[1, 0], [0, 1]], dtype=np.uint8))
        expected = np.array([[0.5, 0.0], [0.0, 0.1]], dtype=np.float32)
        assert np.array_equal(apply_mask(image, mask), expected)

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        image = rng.uniform(0, 1, (32, 32, 3)).astype(np.float32)
        mask = generate_mask(32, 32, LOW_REGIME, seed=5)
        once = apply_mask(image, mask)
        assert np.array_equal(apply_mask(once, mask), once)

    def test_preserves_dtype_and_range(self):
        rng = np.random.default_rng(3)
        for seed in range(5):
            image = rng.uniform(0, 1, (32, 32, 3)).astype(np.float32)
            out = apply_mask(image, generate_mask(32, 32, HIGH_REGIME, seed=seed))
            assert out.dtype == np.float32
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_broadcast_across_channels(self):
        image = np.ones((8, 8, 3), dtype=np.float32)
        mask = generate_mask(8, 8, custom_band(0.2, 0.8), seed=1)
        out = apply_mask(image, mask)
        for c in range(3):
            assert np.array_equal(out[:, :, c], mask.data.astype(np.float32))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            apply_mask(np.zeros((8, 9, 3)), HoleMask.ones(8, 8))


class TestMaskedFraction:
    def test_all_ones(self):
        assert masked_fraction(HoleMask.ones(4, 4)) == 0.0

    def test_all_zeros(self):
        assert masked_fraction(HoleMask.from_array(np.zeros((4, 4), dtype=np.uint8))) == 1.0

    def test_six_of_sixteen(self):
        data = np.ones((4, 4), dtype=np.uint8)
        data.flat[:6] = 0
        assert masked_fraction(HoleMask.from_array(data)) == 6 / 16


class TestRegimes:
    def test_default_pair_is_valid(self):
        assert HIGH_REGIME.band[1] > 0.5
        validate_regime_pair(LOW_REGIME, HIGH_REGIME)

    def test_high_must_reach_past_half(self):
        with pytest.raises(ValueError):
            MaskRegime("high", (0.2, 0.4))

    def test_low_stays_below_half(self):
        with pytest.raises(ValueError):
            MaskRegime("low", (0.2, 0.7))

    def test_overlapping_pair_rejected(self):
        with pytest.raises(ValueError):
            validate_regime_pair(MaskRegime("low", (0.1, 0.45)), MaskRegime("high", (0.4, 0.8)))

    def test_band_bounds_checked(self):
        with pytest.raises(ValueError):
            custom_band(0.5, 0.2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MaskGenConfig(num_strokes_range=(5, 2))
        with pytest.raises(ValueError):
            MaskGenConfig(max_resample_attempts=0)

    def test_mask_from_array_rejects_nonbinary(self):
        with pytest.raises(ValueError):
            HoleMask.from_array(np.full((4, 4), 2, dtype=np.uint8))

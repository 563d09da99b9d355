import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from masksup.errors import LabelOutOfRange, ShapeMismatch
from masksup.losses import LossWeights, context_loss, seg_loss, tasksim_loss, total_loss


def rand_logits(rng, shape):
    return torch.from_numpy(rng.normal(0, 2, shape))


class TestSegLoss:
    def test_uniform_logits_k4(self):
        logits = torch.zeros(4, 8, 8, dtype=torch.float64)
        gt = torch.from_numpy(np.random.default_rng(0).integers(0, 4, (8, 8)))
        assert seg_loss(logits, gt).item() == pytest.approx(math.log(4), rel=1e-9)

    def test_perfect_prediction_limit(self):
        gt = torch.from_numpy(np.random.default_rng(1).integers(0, 3, (8, 8)))
        logits = torch.full((3, 8, 8), -60.0, dtype=torch.float64)
        logits.scatter_(0, gt[None], 60.0)
        assert seg_loss(logits, gt).item() < 1e-9

    def test_two_pixel_hand_case(self):
        # pixel 1: logits (2,0) true 0 -> -log(e^2/(e^2+1)) = log(1+e^-2)
        # pixel 2: logits (0,2) true 0 -> log(1+e^2); mean of the two
        expected = (math.log(1 + math.exp(-2)) + math.log(1 + math.exp(2))) / 2
        assert expected == pytest.approx(1.1269280110429727, rel=1e-12)
        logits = torch.tensor([[[2.0, 0.0]], [[0.0, 2.0]]], dtype=torch.float64)  # (K=2, 1, 2)
        gt = torch.zeros(1, 2, dtype=torch.long)
        assert seg_loss(logits, gt).item() == pytest.approx(expected, rel=1e-9)

    def test_ignore_label_excluded(self):
        logits = torch.zeros(2, 2, 2, dtype=torch.float64)
        gt = torch.tensor([[0, 255], [255, 255]])
        assert seg_loss(logits, gt, ignore_label=255).item() == pytest.approx(math.log(2), rel=1e-9)

    def test_all_ignored_returns_zero(self):
        logits = torch.zeros(2, 2, 2, dtype=torch.float64)
        gt = torch.full((2, 2), 255)
        assert seg_loss(logits, gt, ignore_label=255).item() == 0.0

    def test_label_out_of_range(self):
        logits = torch.zeros(2, 2, 2)
        with pytest.raises(LabelOutOfRange):
            seg_loss(logits, torch.full((2, 2), 2))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            seg_loss(torch.zeros(2, 4, 4), torch.zeros(5, 5, dtype=torch.long))


class TestContextLoss:
    def test_equals_seg_loss_on_same_inputs(self):
        rng = np.random.default_rng(2)
        logits = rand_logits(rng, (3, 6, 6))
        gt = torch.from_numpy(rng.integers(0, 3, (6, 6)))
        assert context_loss(logits, gt).item() == seg_loss(logits, gt).item()

    def test_uniform_k2(self):
        logits = torch.zeros(2, 4, 4, dtype=torch.float64)
        gt = torch.zeros(4, 4, dtype=torch.long)
        assert context_loss(logits, gt).item() == pytest.approx(math.log(2), rel=1e-9)

    def test_masked_pixels_only_restriction(self):
        rng = np.random.default_rng(3)
        logits = rand_logits(rng, (2, 4, 4))
        gt = torch.from_numpy(rng.integers(0, 2, (4, 4)))
        keep = torch.zeros(4, 4, dtype=torch.uint8)  # everything removed -> all supervised
        full = context_loss(logits, gt, keep_mask=keep, masked_pixels_only=True)
        assert full.item() == pytest.approx(seg_loss(logits, gt).item(), rel=1e-9)
        keep_all = torch.ones(4, 4, dtype=torch.uint8)  # nothing removed -> loss 0
        assert context_loss(logits, gt, keep_mask=keep_all, masked_pixels_only=True).item() == 0.0


class TestTasksimLoss:
    def test_identical_outputs(self):
        rng = np.random.default_rng(4)
        logits = rand_logits(rng, (3, 5, 5))
        assert tasksim_loss(logits, logits.clone()).item() == 0.0

    def test_opposite_saturated_pixel(self):
        # softmax saturates to (1,0) vs (0,1): mean squared diff over 2 entries = 1
        a = torch.tensor([[[100.0]], [[-100.0]]], dtype=torch.float64)
        b = torch.tensor([[[-100.0]], [[100.0]]], dtype=torch.float64)
        assert tasksim_loss(a, b).item() == pytest.approx(1.0, abs=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a, b = rand_logits(rng, (4, 6, 6)), rand_logits(rng, (4, 6, 6))
            assert tasksim_loss(a, b).item() == tasksim_loss(b, a).item()

    def test_zero_iff_softmax_equal(self):
        rng = np.random.default_rng(6)
        a = rand_logits(rng, (3, 4, 4))
        shifted = a + 5.0  # softmax shift symmetry
        assert tasksim_loss(a, shifted).item() == pytest.approx(0.0, abs=1e-12)
        b = a.clone()
        b[0, 0, 0] += 1.0
        assert tasksim_loss(a, b).item() > 0.0

    def test_gradients_reach_both_arguments(self):
        rng = np.random.default_rng(7)
        a = rand_logits(rng, (2, 3, 3)).requires_grad_(True)
        b = rand_logits(rng, (2, 3, 3)).requires_grad_(True)
        tasksim_loss(a, b).backward()
        assert a.grad.abs().sum() > 0 and b.grad.abs().sum() > 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            tasksim_loss(torch.zeros(2, 4, 4), torch.zeros(2, 4, 5))


class TestTotalLoss:
    def test_perfect_agreement_vanishes(self):
        gt = torch.from_numpy(np.random.default_rng(8).integers(0, 3, (6, 6)))
        logits = torch.full((3, 6, 6), -60.0, dtype=torch.float64)
        logits.scatter_(0, gt[None], 60.0)
        total, bundle = total_loss(logits, logits.clone(), gt, LossWeights(1, 1, 1))
        assert total.item() < 1e-9
        assert bundle.tasksim == 0.0

    def test_weight_zeroing_reduces_to_seg(self):
        rng = np.random.default_rng(9)
        m_p, m_pm = rand_logits(rng, (3, 5, 5)), rand_logits(rng, (3, 5, 5))
        gt = torch.from_numpy(rng.integers(0, 3, (5, 5)))
        total, bundle = total_loss(m_p, m_pm, gt, LossWeights(1, 0, 0))
        assert total.item() == seg_loss(m_p, gt).item()
        assert bundle.seg == pytest.approx(total.item(), rel=1e-12)

    def test_two_term_reduction(self):
        rng = np.random.default_rng(10)
        m_p, m_pm = rand_logits(rng, (4, 6, 6)), rand_logits(rng, (4, 6, 6))
        gt = torch.from_numpy(rng.integers(0, 4, (6, 6)))
        total, _ = total_loss(m_p, m_pm, gt, LossWeights(1, 1, 0))
        expected = seg_loss(m_p, gt) + context_loss(m_pm, gt)
        assert total.item() == pytest.approx(expected.item(), rel=1e-12)

    def test_decomposition_and_nonnegativity(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            weights = LossWeights(*rng.uniform(0, 3, 3))
            m_p, m_pm = rand_logits(rng, (3, 4, 4)), rand_logits(rng, (3, 4, 4))
            gt = torch.from_numpy(rng.integers(0, 3, (4, 4)))
            total, b = total_loss(m_p, m_pm, gt, weights)
            recomposed = weights.alpha1 * b.seg + weights.alpha2 * b.context + weights.alpha3 * b.tasksim
            assert b.total == pytest.approx(recomposed, rel=1e-6)
            assert min(b.total, b.seg, b.context, b.tasksim) >= 0.0

    def test_single_branch_requires_zero_weights(self):
        gt = torch.zeros(4, 4, dtype=torch.long)
        logits = torch.zeros(2, 4, 4)
        total, bundle = total_loss(logits, None, gt, LossWeights(1, 0, 0))
        assert bundle.context == 0.0 and bundle.tasksim == 0.0
        with pytest.raises(ValueError):
            total_loss(logits, None, gt, LossWeights(1, 1, 0))

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(1, -0.1, 1)


def tiny_net(num_classes=3, seed=0):
    # under-500-parameter conv stack for gradient checks
    gen = torch.Generator().manual_seed(seed)
    net = nn.Sequential(
        nn.Conv2d(3, 6, 3, padding=1),
        nn.ReLU(),
        nn.Conv2d(6, num_classes, 3, padding=1),
    ).double()
    with torch.no_grad():
        for p in net.parameters():
            p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64) * 0.3)
    return net


def loss_value(net, x, xm, gt, weights):
    total, _ = total_loss(net(x), net(xm), gt, weights)
    return total


def central_difference_gradients(net, x, xm, gt, weights, step=1e-3):
    # independent oracle: symmetric finite differences, parameter by parameter
    grads = []
    for p in net.parameters():
        g = torch.zeros_like(p)
        flat = p.data.view(-1)
        gflat = g.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            hi = loss_value(net, x, xm, gt, weights).item()
            flat[i] = orig - step
            lo = loss_value(net, x, xm, gt, weights).item()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


class TestGradientCorrectness:
    def test_total_loss_gradients_match_finite_differences(self):
        rng = np.random.default_rng(12)
        net = tiny_net()
        n_params = sum(p.numel() for p in net.parameters())
        assert n_params <= 500
        x = torch.from_numpy(rng.uniform(0, 1, (1, 3, 8, 8)))
        xm = torch.from_numpy(rng.uniform(0, 1, (1, 3, 8, 8)))
        gt = torch.from_numpy(rng.integers(0, 3, (1, 8, 8)))
        weights = LossWeights(1, 1, 1)

        net.zero_grad()
        loss_value(net, x, xm, gt, weights).backward()
        analytic = [p.grad.clone() for p in net.parameters()]
        numeric = central_difference_gradients(net, x, xm, gt, weights)

        for a, f in zip(analytic, numeric):
            rel = (a - f).abs() / torch.clamp(torch.maximum(a.abs(), f.abs()), min=1e-3)
            assert rel.max().item() < 1e-4

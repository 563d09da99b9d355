"""The three-term training objective.

total = a1 * seg + a2 * context + a3 * tasksim

seg and context are pixel-wise cross-entropy on the clean-branch and
masked-branch logits respectively, averaged over non-ignored pixels.
tasksim is the mean squared difference between the two branches'
post-softmax probability maps; probabilities rather than raw logits keep
the distance bounded and invariant to the softmax shift symmetry, and the
mean reduction keeps the weights comparable across image sizes.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import LabelOutOfRange, ShapeMismatch

_INTERNAL_IGNORE = -100  # sentinel for cross_entropy when pixels are ignored ad hoc


@dataclass(frozen=True)
class LossWeights:
    """Nonnegative weights (a1, a2, a3) for seg / context / tasksim."""

    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ValueError(f"loss weights must be nonnegative, got {self}")


@dataclass(frozen=True)
class LossBundle:
    """Scalar components of one training step, for logging and reports."""

    total: float
    seg: float
    context: float
    tasksim: float
    weights: LossWeights


def _as_batched(logits: torch.Tensor, gt: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    if logits.dim() == 3:
        logits = logits.unsqueeze(0)
    if gt.dim() == 2:
        gt = gt.unsqueeze(0)
    if logits.dim() != 4 or gt.dim() != 3:
        raise ShapeMismatch(f"expected (B,K,H,W) logits and (B,H,W) labels, got {tuple(logits.shape)} / {tuple(gt.shape)}")
    if logits.shape[-2:] != gt.shape[-2:] or logits.shape[0] != gt.shape[0]:
        raise ShapeMismatch(f"logits {tuple(logits.shape)} incompatible with labels {tuple(gt.shape)}")
    return logits, gt


def _check_labels(gt: torch.Tensor, num_classes: int, ignore_label: int | None) -> None:
    valid = (gt >= 0) & (gt < num_classes)
    if ignore_label is not None:
        valid |= gt == ignore_label
    if not bool(valid.all()):
        bad = gt[~valid].flatten()[0].item()
        raise LabelOutOfRange(f"label {bad} outside 0..{num_classes - 1}" + (f" (ignore={ignore_label})" if ignore_label is not None else ""))


def seg_loss(logits: torch.Tensor, gt: torch.Tensor, ignore_label: int | None = None) -> torch.Tensor:
    """Mean cross-entropy over non-ignored pixels; 0 if every pixel is ignored."""
    logits, gt = _as_batched(logits, gt)
    gt = gt.long()
    _check_labels(gt, logits.shape[1], ignore_label)
    ignore_index = _INTERNAL_IGNORE if ignore_label is None else ignore_label
    if not bool((gt != ignore_index).any()):
        return logits.sum() * 0.0
    return F.cross_entropy(logits, gt, ignore_index=ignore_index)


def context_loss(
    masked_logits: torch.Tensor,
    gt: torch.Tensor,
    ignore_label: int | None = None,
    keep_mask: torch.Tensor | None = None,
    masked_pixels_only: bool = False,
) -> torch.Tensor:
    """Cross-entropy on the masked-branch logits.

    By default every non-ignored pixel is supervised, masked or not. With
    masked_pixels_only=True and a keep_mask (1 = pixel kept), supervision is
    restricted to the removed pixels (experimental variant, off by default).
    """
    if not masked_pixels_only:
        return seg_loss(masked_logits, gt, ignore_label)
    if keep_mask is None:
        raise ValueError("masked_pixels_only requires keep_mask")
    logits, gt = _as_batched(masked_logits, gt)
    gt = gt.long()
    _check_labels(gt, logits.shape[1], ignore_label)
    if keep_mask.dim() == 2:
        keep_mask = keep_mask.unsqueeze(0)
    if keep_mask.shape != gt.shape:
        raise ShapeMismatch(f"keep_mask {tuple(keep_mask.shape)} != labels {tuple(gt.shape)}")
    ignore_index = _INTERNAL_IGNORE if ignore_label is None else ignore_label
    restricted = gt.clone()
    restricted[keep_mask != 0] = ignore_index
    if not bool((restricted != ignore_index).any()):
        return logits.sum() * 0.0
    return F.cross_entropy(logits, restricted, ignore_index=ignore_index)


def tasksim_loss(m_p: torch.Tensor, m_pm: torch.Tensor) -> torch.Tensor:
    """Mean squared difference of the two branches' softmax probability maps.

    Symmetric in its arguments; gradients flow into both. Zero iff the
    softmaxed outputs agree elementwise.
    """
    if m_p.shape != m_pm.shape:
        raise ShapeMismatch(f"branch outputs differ in shape: {tuple(m_p.shape)} vs {tuple(m_pm.shape)}")
    class_dim = 0 if m_p.dim() == 3 else 1
    p = F.softmax(m_p, dim=class_dim)
    q = F.softmax(m_pm, dim=class_dim)
    return ((p - q) ** 2).mean()


def total_loss(
    m_p: torch.Tensor,
    m_pm: torch.Tensor | None,
    gt: torch.Tensor,
    weights: LossWeights = LossWeights(),
    ignore_label: int | None = None,
    keep_mask: torch.Tensor | None = None,
    context_masked_pixels_only: bool = False,
) -> tuple[torch.Tensor, LossBundle]:
    """Weighted sum of the three terms.

    Returns the differentiable total plus a LossBundle of detached scalars.
    m_pm may be None only when alpha2 == alpha3 == 0 (single-branch mode);
    the context and tasksim components are then recorded as exactly 0.
    """
    seg = seg_loss(m_p, gt, ignore_label)
    if m_pm is None:
        if weights.alpha2 != 0.0 or weights.alpha3 != 0.0:
            raise ValueError("masked-branch logits required when alpha2 or alpha3 is nonzero")
        total = weights.alpha1 * seg
        return total, LossBundle(float(total.detach()), float(seg.detach()), 0.0, 0.0, weights)
    context = context_loss(m_pm, gt, ignore_label, keep_mask, context_masked_pixels_only)
    tasksim = tasksim_loss(m_p, m_pm)
    total = weights.alpha1 * seg + weights.alpha2 * context + weights.alpha3 * tasksim
    bundle = LossBundle(
        float(total.detach()), float(seg.detach()), float(context.detach()), float(tasksim.detach()), weights
    )
    return total, bundle

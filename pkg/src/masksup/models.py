"""Compact U-Net backbone and the shared-weight two-branch forward.

The two training branches are two plain forward calls through one module,
so there is exactly one parameter set and inference costs a single pass.
GroupNorm keeps normalization independent of batch size, which makes tiny
deterministic batches reproducible.
"""

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeMismatch


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(8, channels), channels)


class ConvBlock(nn.Module):
    """Two 3x3 conv + GroupNorm + ReLU stages."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1),
            _norm(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1),
            _norm(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class UNet(nn.Module):
    """Encoder-decoder segmentation network with skip connections.

    depth counts encoder stages (including the bottom), so there are
    depth - 1 poolings. Inputs of any spatial size are zero-padded to a
    multiple of 2**(depth-1) and the output is cropped back, keeping the
    output spatial size equal to the input's.
    """

    backbone_id = "unet"

    def __init__(self, num_classes: int, base_width: int = 16, depth: int = 3, in_channels: int = 3, seed: int = 0):
        super().__init__()
        if depth < 2:
            raise ValueError("depth must be >= 2")
        if base_width < 4:
            raise ValueError("base_width must be >= 4")
        if num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        self.num_classes = num_classes
        self.base_width = base_width
        self.depth = depth
        self.in_channels = in_channels
        self.seed = seed
        self.forward_calls = 0  # instrumentation for the single-pass inference check

        widths = [base_width * (2**i) for i in range(depth)]
        self.encoders = nn.ModuleList()
        ch = in_channels
        for w in widths:
            self.encoders.append(ConvBlock(ch, w))
            ch = w
        self.decoders = nn.ModuleList()
        for w in reversed(widths[:-1]):
            self.decoders.append(ConvBlock(ch + w, w))
            ch = w
        self.head = nn.Conv2d(ch, num_classes, 1)
        self._init_parameters(seed)

    def _init_parameters(self, seed: int) -> None:
        # Fan-in scaled normal init drawn from one seeded generator; module
        # iteration order is the definition order, so rebuilds are identical.
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for m in self.modules():
                if isinstance(m, nn.Conv2d):
                    fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                    m.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
                    if m.bias is not None:
                        m.bias.zero_()
                elif isinstance(m, nn.GroupNorm):
                    m.weight.fill_(1.0)
                    m.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.forward_calls += 1
        if x.dim() != 4:
            raise ShapeMismatch(f"expected (B,C,H,W) input, got {tuple(x.shape)}")
        h, w = x.shape[-2:]
        stride = 2 ** (self.depth - 1)
        pad_h = (-h) % stride
        pad_w = (-w) % stride
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h))
        skips = []
        for i, enc in enumerate(self.encoders):
            x = enc(x)
            if i < self.depth - 1:
                skips.append(x)
                x = F.max_pool2d(x, 2)
        for dec, skip in zip(self.decoders, reversed(skips)):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = dec(torch.cat([x, skip], dim=1))
        x = self.head(x)
        if pad_h or pad_w:
            x = x[..., :h, :w]
        return x


def build_reference_unet(num_classes: int, base_width: int = 16, depth: int = 3, seed: int = 0, in_channels: int = 3) -> UNet:
    """Construct the reference backbone with deterministic seeded weights."""
    return UNet(num_classes=num_classes, base_width=base_width, depth=depth, in_channels=in_channels, seed=seed)


def siamese_forward(net: nn.Module, image: torch.Tensor, masked_image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Forward both the clean and masked inputs through the one shared net.

    Returns (clean_logits, masked_logits); gradients from losses on either
    output flow into the same parameter set.
    """
    if image.shape != masked_image.shape:
        raise ShapeMismatch(f"clean/masked inputs differ: {tuple(image.shape)} vs {tuple(masked_image.shape)}")
    return net(image), net(masked_image)


def parameter_count(net: nn.Module) -> int:
    """Total number of trainable scalar parameters."""
    return sum(p.numel() for p in net.parameters() if p.requires_grad)


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    """H x W x C (or H x W) float image in [0,1] -> (1,C,H,W) float32 tensor."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        image = image[:, :, None]
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1)))[None]


def logits_to_numpy(logits: torch.Tensor) -> np.ndarray:
    """(1,K,H,W) or (K,H,W) logits tensor -> H x W x K float array."""
    if logits.dim() == 4:
        logits = logits[0]
    return logits.detach().cpu().numpy().transpose(1, 2, 0)

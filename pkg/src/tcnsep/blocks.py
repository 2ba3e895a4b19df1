"""Temporal-convolution primitives: dilated depthwise convolution, global
normalization, residual 1-D conv blocks (plain, gated, dual-branch, and
difference-gate variants), and receptive-field arithmetic.

Tensors are channels-first: (batch, channels, frames).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import torch
import torch.nn.functional as F
from torch import Tensor, nn

NORM_KINDS = ("global", "none")

PRELU_INIT = 0.25
NORM_EPS = 1e-8


@dataclass(frozen=True)
class ConvBlockConfig:
    """Shape and wiring of one residual 1-D conv block."""

    in_channels: int
    hidden_channels: int
    kernel_size: int = 3
    dilation: int = 1
    gated: bool = True
    causal: bool = False
    norm: str = "global"

    def __post_init__(self):
        if self.in_channels < 1 or self.hidden_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.kernel_size < 1:
            raise ValueError("kernel_size must be >= 1")
        if self.dilation < 1:
            raise ValueError("dilation must be >= 1")
        if self.norm not in NORM_KINDS:
            raise ValueError(f"norm must be one of {NORM_KINDS}")


@dataclass(frozen=True)
class TcnConfig:
    """One TCN: a series of residual blocks with per-block dilation factors."""

    dilations: tuple[int, ...] = (1, 2, 4, 4)
    block: ConvBlockConfig = ConvBlockConfig(in_channels=128, hidden_channels=128)

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(self.dilations))
        if not self.dilations:
            raise ValueError("dilation list must be non-empty")
        if any(d < 1 for d in self.dilations):
            raise ValueError("all dilations must be >= 1")


def dilated_depthwise_conv(x: Tensor, taps: Tensor, dilation: int, causal: bool = False) -> Tensor:
    """Per-channel dilated convolution, length preserving.

    Computes y[c, p] = sum_t x[c, p + d*(c0 - t)] * taps[c, t] with zero
    padding outside the signal, where c0 = floor((K-1)/2) centers the kernel
    (for even K the extra reach falls on past samples). ``causal=True``
    shifts all taps onto past samples instead.

    Args:
        x: (C, T) or (B, C, T) input.
        taps: (C, K) per-channel filter taps; no cross-channel mixing.
        dilation: spacing between adjacent taps.

    Returns:
        Tensor with the same shape as ``x``.
    """
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    squeeze = x.dim() == 2
    if squeeze:
        x = x.unsqueeze(0)
    channels, k = taps.shape
    if x.shape[-2] != channels:
        raise ValueError(f"input has {x.shape[-2]} channels but taps have {channels}")
    center = (k - 1) // 2
    if causal:
        left, right = dilation * (k - 1), 0
    else:
        left, right = dilation * (k - 1 - center), dilation * center
    padded = F.pad(x, (left, right))
    weight = taps.flip(-1).unsqueeze(1)  # (C, 1, K)
    out = F.conv1d(padded, weight, groups=channels, dilation=dilation)
    return out.squeeze(0) if squeeze else out


def global_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Normalize by mean/std over all frames and channels jointly, then apply
    per-channel gain and bias. Constant inputs map to the bias (epsilon guard)."""
    squeeze = x.dim() == 2
    if squeeze:
        x = x.unsqueeze(0)
    mean = x.mean(dim=(-2, -1), keepdim=True)
    var = x.var(dim=(-2, -1), unbiased=False, keepdim=True)
    y = (x - mean) / torch.sqrt(var + eps)
    y = y * gain.unsqueeze(-1) + bias.unsqueeze(-1)
    return y.squeeze(0) if squeeze else y


class GlobalNorm(nn.Module):
    """Learned-affine normalization over the joint (channels, frames) axis."""

    def __init__(self, channels: int, eps: float = NORM_EPS):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return global_norm(x, self.gain, self.bias, self.eps)


class ChannelLayerNorm(nn.Module):
    """Per-frame normalization over channels with learned per-channel affine."""

    def __init__(self, channels: int, eps: float = NORM_EPS):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        mean = x.mean(dim=-2, keepdim=True)
        var = x.var(dim=-2, unbiased=False, keepdim=True)
        y = (x - mean) / torch.sqrt(var + self.eps)
        return y * self.gain.unsqueeze(-1) + self.bias.unsqueeze(-1)


def _make_norm(kind: str, channels: int) -> nn.Module:
    if kind == "global":
        return GlobalNorm(channels)
    return nn.Identity()


class InputStage(nn.Module):
    """Input-side sub-chain of a block: 1x1 conv -> PReLU -> norm."""

    def __init__(self, in_channels: int, out_channels: int, norm: str = "global"):
        super().__init__()
        self.conv = nn.Conv1d(in_channels, out_channels, 1)
        self.prelu = nn.PReLU(out_channels, init=PRELU_INIT)
        self.norm = _make_norm(norm, out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(self.prelu(self.conv(x)))


class OutputStage(nn.Module):
    """Output-side sub-chain: depthwise dilated conv -> PReLU -> norm -> 1x1 conv."""

    def __init__(
        self,
        hidden_channels: int,
        out_channels: int,
        kernel_size: int,
        dilation: int,
        causal: bool = False,
        norm: str = "global",
    ):
        super().__init__()
        bound = 1.0 / math.sqrt(kernel_size)
        self.taps = nn.Parameter(torch.empty(hidden_channels, kernel_size).uniform_(-bound, bound))
        self.tap_bias = nn.Parameter(torch.zeros(hidden_channels))
        self.dilation = dilation
        self.causal = causal
        self.prelu = nn.PReLU(hidden_channels, init=PRELU_INIT)
        self.norm = _make_norm(norm, hidden_channels)
        self.conv_out = nn.Conv1d(hidden_channels, out_channels, 1)

    def forward(self, x: Tensor) -> Tensor:
        h = dilated_depthwise_conv(x, self.taps, self.dilation, self.causal)
        h = h + self.tap_bias.unsqueeze(-1)
        return self.conv_out(self.norm(self.prelu(h)))


class ConvBlock(nn.Module):
    """Plain residual block: x + out_stage(in_stage(x))."""

    def __init__(self, cfg: ConvBlockConfig):
        super().__init__()
        self.cfg = cfg
        self.in_stage = InputStage(cfg.in_channels, cfg.hidden_channels, cfg.norm)
        self.out_stage = OutputStage(
            cfg.hidden_channels, cfg.in_channels, cfg.kernel_size, cfg.dilation, cfg.causal, cfg.norm
        )

    def forward(self, x: Tensor) -> Tensor:
        return x + self.out_stage(self.in_stage(x))


class GatedConvBlock(nn.Module):
    """Residual block with two multiplicative gates.

    The first gate scales the input-side sub-chain, the second scales the
    whole span from the depthwise conv to the output 1x1 conv; each gate is
    a 1x1 convolution over the same input as the sub-chain it gates,
    squashed by a logistic sigmoid.
    """

    def __init__(self, cfg: ConvBlockConfig):
        super().__init__()
        self.cfg = cfg
        self.in_stage = InputStage(cfg.in_channels, cfg.hidden_channels, cfg.norm)
        self.in_gate = nn.Conv1d(cfg.in_channels, cfg.hidden_channels, 1)
        self.out_stage = OutputStage(
            cfg.hidden_channels, cfg.in_channels, cfg.kernel_size, cfg.dilation, cfg.causal, cfg.norm
        )
        self.out_gate = nn.Conv1d(cfg.hidden_channels, cfg.in_channels, 1)

    def forward(self, x: Tensor) -> Tensor:
        a = self.in_stage(x) * torch.sigmoid(self.in_gate(x))
        return x + self.out_stage(a) * torch.sigmoid(self.out_gate(a))


class DualBranchConvBlock(nn.Module):
    """Residual block whose two sub-chains are duplicated into parallel,
    independently parameterized branches whose outputs are averaged.

    Gates (when enabled) are not duplicated: one gate per site scales the
    branch average.
    """

    def __init__(self, cfg: ConvBlockConfig, num_branches: int = 2):
        super().__init__()
        self.cfg = cfg
        self.in_branches = nn.ModuleList(
            InputStage(cfg.in_channels, cfg.hidden_channels, cfg.norm) for _ in range(num_branches)
        )
        self.out_branches = nn.ModuleList(
            OutputStage(
                cfg.hidden_channels, cfg.in_channels, cfg.kernel_size, cfg.dilation, cfg.causal, cfg.norm
            )
            for _ in range(num_branches)
        )
        if cfg.gated:
            self.in_gate = nn.Conv1d(cfg.in_channels, cfg.hidden_channels, 1)
            self.out_gate = nn.Conv1d(cfg.hidden_channels, cfg.in_channels, 1)
        else:
            self.in_gate = None
            self.out_gate = None

    @staticmethod
    def _mean(outs: list[Tensor]) -> Tensor:
        return torch.stack(outs).mean(dim=0)

    def forward(self, x: Tensor) -> Tensor:
        a = self._mean([br(x) for br in self.in_branches])
        if self.in_gate is not None:
            a = a * torch.sigmoid(self.in_gate(x))
        b = self._mean([br(a) for br in self.out_branches])
        if self.out_gate is not None:
            b = b * torch.sigmoid(self.out_gate(a))
        return x + b


class DifferenceGateConvBlock(nn.Module):
    """Residual block whose two sites are highway-style difference gates.

    Each site holds three structurally identical copies of the sub-chain it
    replaces: branch 0 drives the gate, branches 1 and 2 are signal
    transformations whose difference is gated, and the (1 - g) carry path
    replaces the residual add. Sites are channel preserving, so the block
    requires hidden_channels == in_channels.
    """

    def __init__(self, cfg: ConvBlockConfig):
        super().__init__()
        if cfg.hidden_channels != cfg.in_channels:
            raise ValueError(
                "difference-gate blocks need hidden_channels == in_channels "
                f"(got {cfg.hidden_channels} != {cfg.in_channels})"
            )
        self.cfg = cfg
        c = cfg.in_channels
        self.in_branches = nn.ModuleList(InputStage(c, c, cfg.norm) for _ in range(3))
        self.out_branches = nn.ModuleList(
            OutputStage(c, c, cfg.kernel_size, cfg.dilation, cfg.causal, cfg.norm) for _ in range(3)
        )

    @staticmethod
    def _site(branches: nn.ModuleList, x: Tensor) -> Tensor:
        g = torch.sigmoid(branches[0](x))
        return g * (branches[1](x) - branches[2](x)) + (1.0 - g) * x

    def forward(self, x: Tensor) -> Tensor:
        a = self._site(self.in_branches, x)
        return self._site(self.out_branches, a)


def make_conv_block(cfg: ConvBlockConfig) -> nn.Module:
    return GatedConvBlock(cfg) if cfg.gated else ConvBlock(cfg)


class TcnStack(nn.Module):
    """Serial chain of residual blocks following a dilation schedule."""

    def __init__(self, cfg: TcnConfig, block_factory: Callable[[ConvBlockConfig], nn.Module] | None = None):
        super().__init__()
        from dataclasses import replace

        factory = block_factory or make_conv_block
        self.blocks = nn.ModuleList(
            factory(replace(cfg.block, dilation=d)) for d in cfg.dilations
        )

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x


class TapAveragedTcnStack(TcnStack):
    """TCN stack whose output is the running output averaged over every
    dilated block, giving multi-scale receptive fields at no parameter cost."""

    def forward(self, x: Tensor) -> Tensor:
        taps = []
        for block in self.blocks:
            x = block(x)
            taps.append(x)
        return torch.stack(taps).mean(dim=0)


def receptive_field(dilations: Sequence[int], kernel_size: int) -> int:
    """Number of input frames influencing one output frame of a dilated-conv
    stack: 1 + (K - 1) * sum(dilations)."""
    dilations = tuple(dilations)
    if not dilations:
        raise ValueError("dilation list must be non-empty")
    if any(d < 1 for d in dilations):
        raise ValueError("all dilations must be >= 1")
    if kernel_size < 1:
        raise ValueError("kernel_size must be >= 1")
    return 1 + (kernel_size - 1) * sum(dilations)


def gradient_support_size(
    fn: Callable[[Tensor], Tensor],
    num_frames: int,
    channels: int,
    probe_frame: int | None = None,
    generator: torch.Generator | None = None,
    dtype: torch.dtype = torch.float32,
) -> int:
    """Measure how many input frames carry gradient into one output frame.

    ``fn`` must map (1, C, T) -> (1, C, T). The probe sums the output at one
    frame and counts input frames with a nonzero gradient, i.e. the
    empirical receptive field. Gradients outside the true support are
    structurally zero (no connecting path), so any float dtype is exact. The
    probe frame defaults to the center; the caller must make ``num_frames``
    large enough to contain the full support.
    """
    t0 = num_frames // 2 if probe_frame is None else probe_frame
    x = torch.randn(1, channels, num_frames, dtype=dtype, generator=generator)
    x.requires_grad_(True)
    y = fn(x)
    y[0, :, t0].sum().backward()
    assert x.grad is not None
    support = x.grad[0].abs().sum(dim=0) != 0
    return int(support.sum().item())

"""Mask-producing separator networks built from gated TCN stacks.

Five variants share one skeleton (channel layer norm -> 1x1 bottleneck conv
-> TCN body -> 1x1 mask conv -> softmax over sources) and differ in the body:

- porta: serial gated TCN stacks.
- py:    pyramid of branches with different stack counts, blended by a
         learned per-utterance weight vector (the "weightor").
- sh:    serial stacks with two levels of tap averaging; exactly the same
         parameter count as porta.
- pa:    each block's sub-chains duplicated into two averaged branches.
- su:    each block's sub-chains replaced by highway-style difference gates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import Tensor, nn

from .blocks import (
    ChannelLayerNorm,
    DifferenceGateConvBlock,
    DualBranchConvBlock,
    TapAveragedTcnStack,
    TcnConfig,
    TcnStack,
    make_conv_block,
)

VARIANTS = ("porta", "py", "sh", "pa", "su")


@dataclass(frozen=True)
class WeightorConfig:
    """Branch-weight network layout.

    A strided front conv summarizes the mixture representation, three 1x1
    conv + max-pool stages shrink time, and a global max pool plus softmax
    yields one convex weight vector per utterance.
    """

    in_channels: int
    num_branches: int
    hidden_channels: int = 64
    kernel_size: int = 3
    pool_size: int = 2

    def __post_init__(self):
        if self.num_branches < 1:
            raise ValueError("num_branches must be >= 1")
        if min(self.in_channels, self.hidden_channels, self.kernel_size, self.pool_size) < 1:
            raise ValueError("weightor sizes must be >= 1")


class Weightor(nn.Module):
    """Maps a latent mixture representation (B, N, T) to branch weights
    (B, num_branches) on the probability simplex."""

    def __init__(self, cfg: WeightorConfig):
        super().__init__()
        self.cfg = cfg
        h = cfg.hidden_channels
        self.front = nn.Conv1d(cfg.in_channels, h, cfg.kernel_size, padding=cfg.kernel_size // 2)
        self.prelu = nn.PReLU(h, init=0.25)
        self.norm = ChannelLayerNorm(h)
        self.stages = nn.ModuleList(
            [nn.Conv1d(h, h, 1), nn.Conv1d(h, h, 1), nn.Conv1d(h, cfg.num_branches, 1)]
        )
        self.pool = nn.MaxPool1d(cfg.pool_size, ceil_mode=True)

    def forward(self, rep: Tensor) -> Tensor:
        x = self.norm(self.prelu(self.front(rep)))
        for conv in self.stages:
            x = self.pool(conv(x))
        return torch.softmax(x.amax(dim=-1), dim=-1)


@dataclass(frozen=True)
class SeparatorConfig:
    """Separator shape shared by all variants.

    Attributes:
        variant: one of VARIANTS.
        num_sources: sources S to produce masks for.
        rep_channels: latent channels N coming from the encoder.
        num_tcns: serial TCN stacks in the body (porta/sh/pa/su).
        tcn: per-stack dilation schedule and block shape; tcn.block.in_channels
            is the bottleneck width B, tcn.block.hidden_channels the width H
            inside each block.
        py_branch_depths: stacks per pyramid branch (py only).
        weightor_hidden: hidden width of the branch-weight network (py only).
    """

    variant: str = "porta"
    num_sources: int = 2
    rep_channels: int = 256
    num_tcns: int = 4
    tcn: TcnConfig = field(default_factory=TcnConfig)
    py_branch_depths: tuple[int, ...] = (3, 4, 5)
    weightor_hidden: int = 64

    def __post_init__(self):
        object.__setattr__(self, "variant", str(self.variant).lower())
        object.__setattr__(self, "py_branch_depths", tuple(self.py_branch_depths))
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.num_sources < 2:
            raise ValueError("num_sources must be >= 2")
        if self.rep_channels < 1:
            raise ValueError("rep_channels must be >= 1")
        if self.num_tcns < 1:
            raise ValueError("num_tcns must be >= 1")
        if not self.py_branch_depths or any(d < 1 for d in self.py_branch_depths):
            raise ValueError("py_branch_depths must be non-empty with all depths >= 1")
        if self.variant == "su" and self.tcn.block.hidden_channels != self.tcn.block.in_channels:
            raise ValueError(
                "the su variant is channel preserving inside blocks and needs "
                "hidden_channels == bottleneck (in_channels)"
            )

    @property
    def bottleneck_channels(self) -> int:
        return self.tcn.block.in_channels


def _stack_factory(cfg: SeparatorConfig):
    """Per-variant (stack class, block factory) pair."""
    if cfg.variant == "pa":
        return TcnStack, DualBranchConvBlock
    if cfg.variant == "su":
        return TcnStack, DifferenceGateConvBlock
    if cfg.variant == "sh":
        return TapAveragedTcnStack, make_conv_block
    return TcnStack, make_conv_block


class MaskSeparator(nn.Module):
    """Shared skeleton: norm -> bottleneck -> body -> mask conv -> softmax."""

    def __init__(self, cfg: SeparatorConfig):
        super().__init__()
        self.cfg = cfg
        b = cfg.bottleneck_channels
        self.input_norm = ChannelLayerNorm(cfg.rep_channels)
        self.bottleneck = nn.Conv1d(cfg.rep_channels, b, 1)
        self.mask_conv = nn.Conv1d(b, cfg.num_sources * cfg.rep_channels, 1)

    def _body(self, h: Tensor, rep: Tensor) -> Tensor:
        raise NotImplementedError

    def _split_sources(self, logits: Tensor) -> Tensor:
        batch, _, t = logits.shape
        return logits.view(batch, self.cfg.num_sources, self.cfg.rep_channels, t)

    def mask_logits(self, rep: Tensor) -> Tensor:
        """(B, N, T) -> pre-softmax mask logits (B, S, N, T)."""
        squeeze = rep.dim() == 2
        if squeeze:
            rep = rep.unsqueeze(0)
        h = self.bottleneck(self.input_norm(rep))
        logits = self._split_sources(self._mask_from_body(h, rep))
        return logits.squeeze(0) if squeeze else logits

    def _mask_from_body(self, h: Tensor, rep: Tensor) -> Tensor:
        return self.mask_conv(self._body(h, rep))

    def forward(self, rep: Tensor) -> Tensor:
        """(B, N, T) -> masks (B, S, N, T), softmax-normalized over S."""
        return torch.softmax(self.mask_logits(rep), dim=-3)


class SerialMaskSeparator(MaskSeparator):
    """Body = serial TCN stacks; the sh variant additionally averages the
    running output across stacks."""

    def __init__(self, cfg: SeparatorConfig):
        super().__init__(cfg)
        stack_cls, block_factory = _stack_factory(cfg)
        self.stacks = nn.ModuleList(
            stack_cls(cfg.tcn, block_factory) for _ in range(cfg.num_tcns)
        )
        self.average_stack_outputs = cfg.variant == "sh"

    def _body(self, h: Tensor, rep: Tensor) -> Tensor:
        if not self.average_stack_outputs:
            for stack in self.stacks:
                h = stack(h)
            return h
        outs = []
        for stack in self.stacks:
            h = stack(h)
            outs.append(h)
        return torch.stack(outs).mean(dim=0)


class PyramidMaskSeparator(MaskSeparator):
    """Body = pyramid of serial-stack branches of differing depths; branch
    mask logits are blended with per-utterance weightor weights, which keeps
    the output logits exactly inside the convex hull of the branch logits."""

    def __init__(self, cfg: SeparatorConfig):
        super().__init__(cfg)
        self.branches = nn.ModuleList(
            nn.Sequential(*(TcnStack(cfg.tcn) for _ in range(depth)))
            for depth in cfg.py_branch_depths
        )
        self.weightor = Weightor(
            WeightorConfig(
                in_channels=cfg.rep_channels,
                num_branches=len(cfg.py_branch_depths),
                hidden_channels=cfg.weightor_hidden,
            )
        )

    def branch_logits(self, rep: Tensor) -> list[Tensor]:
        """Per-branch mask logits, each (B, S, N, T), for a batched rep."""
        h = self.bottleneck(self.input_norm(rep))
        return [self._split_sources(self.mask_conv(branch(h))) for branch in self.branches]

    def _mask_from_body(self, h: Tensor, rep: Tensor) -> Tensor:
        weights = self.weightor(rep)  # (B, num_branches)
        logits = None
        for idx, branch in enumerate(self.branches):
            contrib = weights[:, idx].view(-1, 1, 1) * self.mask_conv(branch(h))
            logits = contrib if logits is None else logits + contrib
        return logits

    def _body(self, h: Tensor, rep: Tensor) -> Tensor:  # pragma: no cover
        raise NotImplementedError("pyramid body is blended at the logit level")


def build_separator(cfg: SeparatorConfig) -> MaskSeparator:
    """Instantiate the variant named by ``cfg.variant``."""
    if cfg.variant == "py":
        return PyramidMaskSeparator(cfg)
    return SerialMaskSeparator(cfg)


def count_parameters(obj: nn.Module | SeparatorConfig) -> int:
    """Exact number of learnable scalars in a module (or in the separator a
    config describes)."""
    module = build_separator(obj) if isinstance(obj, SeparatorConfig) else obj
    return sum(p.numel() for p in module.parameters())

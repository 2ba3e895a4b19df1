"""Learned waveform frontend: strided 1-D conv analysis (encoder) and its
transposed-conv synthesis counterpart (decoder).

The encoder maps a waveform (B, 1, n) to a nonnegative latent (B, N, T); the
decoder maps a latent back to a waveform by overlap-add of learned synthesis
filters. Both are linear in their filters; only the encoder applies a
pointwise nonlinearity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch.nn.functional as F
from torch import Tensor, nn

from .blocks import PRELU_INIT


@dataclass(frozen=True)
class FrontendConfig:
    """Analysis/synthesis filterbank geometry.

    Attributes:
        num_filters: latent channels N.
        filter_length: per-filter window length L in samples.
        stride: hop between adjacent frames; defaults to L // 2 (50% overlap).
    """

    num_filters: int = 256
    filter_length: int = 20
    stride: int = 0

    def __post_init__(self):
        if self.stride == 0:
            object.__setattr__(self, "stride", self.filter_length // 2)
        if self.num_filters < 1:
            raise ValueError("num_filters must be >= 1")
        if self.filter_length < 1:
            raise ValueError("filter_length must be >= 1")
        if not 0 < self.stride <= self.filter_length:
            raise ValueError("stride must be in [1, filter_length]")


def padded_length(num_samples: int, cfg: FrontendConfig) -> int:
    """Smallest length >= num_samples that the frontend maps through exactly:
    L plus a whole number of hops."""
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    hops = max(0, math.ceil((num_samples - cfg.filter_length) / cfg.stride))
    return cfg.filter_length + hops * cfg.stride


def frame_count(num_samples: int, cfg: FrontendConfig) -> int:
    """Number of analysis frames T produced for a (padded) waveform."""
    return (padded_length(num_samples, cfg) - cfg.filter_length) // cfg.stride + 1


def pad_waveform(x: Tensor, cfg: FrontendConfig) -> tuple[Tensor, int]:
    """Zero-pad (B, 1, n) on the right to the nearest frame-exact length.

    Returns the padded tensor and the original length for later trimming.
    """
    n = x.shape[-1]
    target = padded_length(n, cfg)
    if target > n:
        x = F.pad(x, (0, target - n))
    return x, n


class Encoder(nn.Module):
    """Strided conv analysis filterbank with a PReLU output stage."""

    def __init__(self, cfg: FrontendConfig):
        super().__init__()
        self.cfg = cfg
        self.conv = nn.Conv1d(1, cfg.num_filters, cfg.filter_length, stride=cfg.stride, bias=False)
        self.prelu = nn.PReLU(cfg.num_filters, init=PRELU_INIT)

    def forward(self, x: Tensor) -> Tensor:
        """(B, 1, n_padded) -> (B, N, T). The input length must already be
        frame exact (see pad_waveform)."""
        n = x.shape[-1]
        if n != padded_length(n, self.cfg):
            raise ValueError(f"input length {n} is not frame exact; pad first")
        return self.prelu(self.conv(x))


class Decoder(nn.Module):
    """Transposed-conv synthesis filterbank (linear overlap-add)."""

    def __init__(self, cfg: FrontendConfig):
        super().__init__()
        self.cfg = cfg
        self.deconv = nn.ConvTranspose1d(
            cfg.num_filters, 1, cfg.filter_length, stride=cfg.stride, bias=False
        )

    def forward(self, latent: Tensor) -> Tensor:
        """(B, N, T) -> (B, 1, (T-1)*stride + L)."""
        return self.deconv(latent)


def apply_mask(latent: Tensor, mask: Tensor) -> Tensor:
    """Elementwise masking of a latent: both (B, N, T), or mask (B, S, N, T)
    against latent (B, N, T) which broadcasts to per-source latents."""
    if mask.dim() == latent.dim() + 1:
        latent = latent.unsqueeze(1)
    return latent * mask

"""End-to-end separation model: pad -> encode -> mask -> decode -> trim.

Input is a batch of mixture waveforms (B, n); output is (B, S, n) estimated
source waveforms. One decoder is shared across sources.
"""

from __future__ import annotations

from torch import Tensor, nn

from .frontend import Decoder, Encoder, FrontendConfig, pad_waveform
from .separators import SeparatorConfig, build_separator


class SeparationModel(nn.Module):
    """Encoder, mask-producing separator, and shared linear decoder."""

    def __init__(self, frontend: FrontendConfig, separator: SeparatorConfig):
        super().__init__()
        if separator.rep_channels != frontend.num_filters:
            raise ValueError(
                f"separator expects {separator.rep_channels} latent channels but the "
                f"frontend produces {frontend.num_filters}"
            )
        self.frontend_cfg = frontend
        self.separator_cfg = separator
        self.encoder = Encoder(frontend)
        self.separator = build_separator(separator)
        self.decoder = Decoder(frontend)

    @property
    def num_sources(self) -> int:
        return self.separator_cfg.num_sources

    def forward(self, mixture: Tensor) -> Tensor:
        """(B, n) or (n,) mixture -> (B, S, n) or (S, n) source estimates."""
        squeeze = mixture.dim() == 1
        if squeeze:
            mixture = mixture.unsqueeze(0)
        if mixture.dim() != 2:
            raise ValueError(f"expected (B, n) waveforms, got shape {tuple(mixture.shape)}")
        batch, n = mixture.shape
        x, _ = pad_waveform(mixture.unsqueeze(1), self.frontend_cfg)
        rep = self.encoder(x)  # (B, N, T)
        masks = self.separator(rep)  # (B, S, N, T)
        masked = rep.unsqueeze(1) * masks
        s = self.num_sources
        frames = masked.shape[-1]
        flat = masked.reshape(batch * s, rep.shape[1], frames)
        wavs = self.decoder(flat).reshape(batch, s, -1)
        out = wavs[..., :n]
        return out.squeeze(0) if squeeze else out


def model_parameter_count(model: nn.Module) -> int:
    """Learnable scalars across encoder, separator, and decoder."""
    return sum(p.numel() for p in model.parameters())

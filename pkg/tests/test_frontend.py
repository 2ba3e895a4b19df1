"""Encoder/decoder filterbank tests: frame arithmetic, overlap-add
synthesis against a manual oracle, linearity, and the end-to-end model."""

import numpy as np
import pytest
import torch

from tcnsep.blocks import ConvBlockConfig, TcnConfig
from tcnsep.frontend import (
    Decoder,
    Encoder,
    FrontendConfig,
    apply_mask,
    frame_count,
    pad_waveform,
    padded_length,
)
from tcnsep.model import SeparationModel
from tcnsep.separators import SeparatorConfig

from helpers import check_gradients


def toy_frontend(**kw) -> FrontendConfig:
    base = dict(num_filters=8, filter_length=16, stride=8)
    base.update(kw)
    return FrontendConfig(**base)


def toy_model(variant="porta", **fe_kw) -> SeparationModel:
    fe = toy_frontend(**fe_kw)
    block = ConvBlockConfig(in_channels=6, hidden_channels=6)
    sep = SeparatorConfig(
        variant=variant,
        num_sources=2,
        rep_channels=fe.num_filters,
        num_tcns=1,
        tcn=TcnConfig(dilations=(1, 2), block=block),
        py_branch_depths=(1, 2),
        weightor_hidden=4,
    )
    return SeparationModel(fe, sep)


class TestFrameArithmetic:
    def test_default_stride_is_half_window(self):
        cfg = FrontendConfig(num_filters=4, filter_length=20)
        assert cfg.stride == 10

    def test_stride_bounds(self):
        with pytest.raises(ValueError):
            FrontendConfig(num_filters=4, filter_length=10, stride=11)

    @pytest.mark.parametrize("n,want", [(16, 1), (24, 2), (17, 2), (15, 1), (40, 4)])
    def test_frame_count_examples(self, n, want):
        assert frame_count(n, toy_frontend()) == want

    @pytest.mark.parametrize("filter_length,stride", [(16, 8), (20, 10), (12, 4), (7, 7)])
    def test_frame_count_matches_enumeration(self, filter_length, stride):
        cfg = toy_frontend(filter_length=filter_length, stride=stride)
        for n in range(1, 257):
            padded = padded_length(n, cfg)
            assert padded >= n
            # oracle: count window placements over the padded signal
            placements = [p for p in range(0, padded - filter_length + 1, stride)]
            assert placements[-1] + filter_length == padded  # frame exact
            assert frame_count(n, cfg) == len(placements)


class TestEncoder:
    def test_output_shape(self):
        torch.manual_seed(0)
        enc = Encoder(toy_frontend())
        y = enc(torch.randn(2, 1, 40))
        assert y.shape == (2, 8, 4)

    def test_rejects_partial_window(self):
        enc = Encoder(toy_frontend())
        with pytest.raises(ValueError):
            enc(torch.randn(1, 1, 15))
        with pytest.raises(ValueError):
            enc(torch.randn(1, 1, 17))

    def test_pad_waveform_makes_frame_exact(self):
        cfg = toy_frontend()
        x = torch.randn(1, 1, 21)
        padded, n = pad_waveform(x, cfg)
        assert n == 21
        assert padded.shape[-1] == 24
        assert torch.equal(padded[..., :21], x)
        assert torch.equal(padded[..., 21:], torch.zeros(1, 1, 3))


class TestDecoder:
    def test_single_frame_length(self):
        torch.manual_seed(1)
        dec = Decoder(toy_frontend())
        y = dec(torch.randn(1, 8, 1))
        assert y.shape == (1, 1, 16)

    def test_zero_rep_gives_zero_waveform(self):
        dec = Decoder(toy_frontend())
        assert torch.equal(dec(torch.zeros(1, 8, 3)), torch.zeros(1, 1, 32))

    def test_linearity(self):
        torch.manual_seed(2)
        dec = Decoder(toy_frontend()).double()
        r1 = torch.randn(1, 8, 5, dtype=torch.float64)
        r2 = torch.randn(1, 8, 5, dtype=torch.float64)
        lhs = dec(2.5 * r1 - 0.75 * r2)
        rhs = 2.5 * dec(r1) - 0.75 * dec(r2)
        assert torch.allclose(lhs, rhs, atol=1e-10)

    def test_overlap_add_matches_manual_oracle(self):
        torch.manual_seed(3)
        cfg = toy_frontend()
        dec = Decoder(cfg).double()
        rep = torch.randn(1, 8, 2, dtype=torch.float64)
        got = dec(rep)[0, 0].detach().numpy()
        # oracle: each frame maps linearly to a length-L chunk; chunks are
        # overlap-added at the stride
        w = dec.deconv.weight.detach().numpy()  # (N, 1, L)
        want = np.zeros(cfg.stride * 1 + cfg.filter_length)
        for t in range(2):
            chunk = np.tensordot(rep[0, :, t].numpy(), w[:, 0, :], axes=(0, 0))
            want[t * cfg.stride : t * cfg.stride + cfg.filter_length] += chunk
        assert np.allclose(got, want, atol=1e-12)
        # middle region is the sum of both chunks' overlapping parts
        assert got.shape[0] == 24


class TestMasking:
    def test_uniform_masks_halve(self):
        rep = torch.randn(2, 8, 5)
        masked = apply_mask(rep, torch.full((2, 8, 5), 0.5))
        assert torch.allclose(masked, rep / 2)

    def test_one_hot_masks(self):
        rep = torch.randn(1, 8, 5)
        masks = torch.stack([torch.ones(1, 8, 5), torch.zeros(1, 8, 5)], dim=1)
        out = apply_mask(rep, masks)
        assert torch.equal(out[:, 0], rep)
        assert torch.equal(out[:, 1], torch.zeros_like(rep))

    def test_simplex_masks_preserve_sum(self):
        torch.manual_seed(4)
        rep = torch.randn(2, 8, 5)
        masks = torch.softmax(torch.randn(2, 3, 8, 5), dim=1)
        out = apply_mask(rep, masks)
        assert torch.allclose(out.sum(dim=1), rep, atol=1e-6)


class TestFrontendGradients:
    def test_encode_decode_gradcheck(self):
        torch.manual_seed(5)
        cfg = toy_frontend(num_filters=4, filter_length=6, stride=3)
        enc = Encoder(cfg).double()
        dec = Decoder(cfg).double()
        x = torch.randn(1, 1, 12, dtype=torch.float64)
        target = torch.randn(1, 1, 12, dtype=torch.float64)
        params = list(enc.parameters()) + list(dec.parameters())
        check_gradients(
            lambda: (dec(enc(x)) - target).pow(2).sum(), params, max_coords=4
        )


class TestSeparationModel:
    def test_output_shape_and_trim(self):
        torch.manual_seed(6)
        model = toy_model()
        for n in (40, 37, 16, 5):
            y = model(torch.randn(2, n))
            assert y.shape == (2, 2, n)

    def test_unbatched_input(self):
        torch.manual_seed(7)
        model = toy_model()
        y = model(torch.randn(33))
        assert y.shape == (2, 33)

    def test_channel_mismatch_rejected(self):
        fe = toy_frontend(num_filters=9)
        block = ConvBlockConfig(in_channels=6, hidden_channels=6)
        sep = SeparatorConfig(variant="porta", rep_channels=8, tcn=TcnConfig(dilations=(1,), block=block))
        with pytest.raises(ValueError):
            SeparationModel(fe, sep)

    def test_deterministic_forward(self):
        torch.manual_seed(8)
        model = toy_model()
        x = torch.randn(1, 50)
        with torch.no_grad():
            a = model(x)
            b = model(x)
        assert torch.equal(a, b)

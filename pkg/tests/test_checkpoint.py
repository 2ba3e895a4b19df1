"""Checkpoint container tests: binary layout, bitwise forward
reproducibility, and optimizer-state round trips."""

import json

import numpy as np
import pytest
import torch

from tcnsep.blocks import ConvBlockConfig, TcnConfig
from tcnsep.checkpoint import (
    FORMAT_TAG,
    load_checkpoint,
    restore_model,
    restore_optimizer,
    save_checkpoint,
    torch_rng_state_from,
)
from tcnsep.frontend import FrontendConfig
from tcnsep.model import SeparationModel
from tcnsep.separators import SeparatorConfig


def tiny_model() -> SeparationModel:
    fe = FrontendConfig(num_filters=8, filter_length=8, stride=4)
    sep = SeparatorConfig(
        variant="porta",
        rep_channels=8,
        num_tcns=1,
        tcn=TcnConfig(dilations=(1,), block=ConvBlockConfig(in_channels=4, hidden_channels=4)),
    )
    return SeparationModel(fe, sep)


class TestLayout:
    def test_header_is_first_line_json(self, tmp_path):
        torch.manual_seed(0)
        model = tiny_model()
        path = tmp_path / "ckpt_1.bin"
        save_checkpoint(path, model, step=1, config={"note": 1})
        raw = path.read_bytes()
        header = json.loads(raw[: raw.index(b"\n")].decode("utf-8"))
        assert header["format"] == FORMAT_TAG
        assert header["step"] == 1
        assert header["config"] == {"note": 1}
        keys = [t["key"] for t in header["tensors"]]
        assert "encoder.conv.weight" in keys

    def test_blobs_are_little_endian_float32(self, tmp_path):
        model = torch.nn.Linear(2, 1, bias=False)
        with torch.no_grad():
            model.weight.copy_(torch.tensor([[1.5, -2.0]]))
        path = tmp_path / "ckpt_0.bin"
        save_checkpoint(path, model, step=0)
        raw = path.read_bytes()
        start = raw.index(b"\n") + 1
        values = np.frombuffer(raw, dtype="<f4", count=2, offset=start)
        assert values.tolist() == [1.5, -2.0]

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "bogus.bin"
        path.write_bytes(b'{"format": "something-else"}\n')
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestRoundTrip:
    def test_forward_is_bitwise_identical(self, tmp_path):
        torch.manual_seed(1)
        model = tiny_model()
        probe = torch.randn(1, 64)
        with torch.no_grad():
            want = model(probe)
        path = tmp_path / "ckpt_5.bin"
        save_checkpoint(path, model, step=5, config=None)

        torch.manual_seed(99)  # fresh, differently initialized model
        other = tiny_model()
        with torch.no_grad():
            before = other(probe)
        assert not torch.equal(before, want)
        restore_model(other, load_checkpoint(path))
        with torch.no_grad():
            after = other(probe)
        assert torch.equal(after, want)

    def test_optimizer_state_resumes_identically(self, tmp_path):
        def fresh():
            torch.manual_seed(2)
            model = tiny_model()
            opt = torch.optim.Adam(model.parameters(), lr=1e-3)
            return model, opt

        def one_step(model, opt, seed):
            g = torch.Generator().manual_seed(seed)
            x = torch.randn(1, 64, generator=g)
            opt.zero_grad()
            model(x).pow(2).mean().backward()
            opt.step()

        model, opt = fresh()
        for s in range(3):
            one_step(model, opt, s)
        path = tmp_path / "ckpt_3.bin"
        save_checkpoint(path, model, step=3, optimizer=opt)
        one_step(model, opt, 3)
        want = [p.detach().clone() for p in model.parameters()]

        model2, opt2 = fresh()
        ckpt = load_checkpoint(path)
        restore_model(model2, ckpt)
        restore_optimizer(opt2, model2, ckpt)
        one_step(model2, opt2, 3)
        for got, expect in zip(model2.parameters(), want):
            assert torch.equal(got.detach(), expect)

    def test_rng_state_round_trip(self, tmp_path):
        torch.manual_seed(3)
        model = tiny_model()
        torch.manual_seed(1234)
        _ = torch.randn(10)
        want_next = None
        state = torch.get_rng_state()
        path = tmp_path / "ckpt_0.bin"
        save_checkpoint(path, model, step=0)
        want_next = torch.randn(5)

        restored = torch_rng_state_from(load_checkpoint(path))
        assert restored is not None
        torch.set_rng_state(restored)
        assert torch.equal(torch.randn(5), want_next)
        torch.set_rng_state(state)

    def test_numpy_rng_state_preserved(self, tmp_path):
        torch.manual_seed(4)
        model = tiny_model()
        rng = np.random.default_rng(7)
        rng.integers(0, 10, size=3)
        path = tmp_path / "ckpt_0.bin"
        save_checkpoint(path, model, step=0, numpy_rng_state=rng.bit_generator.state)
        want = rng.integers(0, 1000, size=4)

        ckpt = load_checkpoint(path)
        rng2 = np.random.default_rng(0)
        rng2.bit_generator.state = ckpt.header["rng"]["numpy"]
        assert np.array_equal(rng2.integers(0, 1000, size=4), want)

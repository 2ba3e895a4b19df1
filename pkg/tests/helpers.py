"""Shared test utilities: a central finite-difference gradient checker and
small waveform builders."""

from __future__ import annotations

import numpy as np
import torch


def check_gradients(
    loss_fn,
    tensors,
    eps: float = 1e-6,
    rel_tol: float = 1e-5,
    max_coords: int = 4,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare autograd gradients against central finite differences.

    ``loss_fn`` is a deterministic zero-argument callable returning a scalar
    tensor built from ``tensors`` (float64 leaves with requires_grad). For up
    to ``max_coords`` sampled coordinates per tensor the symmetric difference
    quotient is compared to the autograd value; coordinates where both are
    essentially zero count as agreeing.

    Returns the worst relative error seen (and asserts it is below rel_tol).
    """
    rng = rng or np.random.default_rng(0)
    tensors = list(tensors)
    for t in tensors:
        assert t.dtype == torch.float64, "gradient checks run in float64"
        assert t.requires_grad
        if t.grad is not None:
            t.grad = None
    loss = loss_fn()
    loss.backward()

    worst = 0.0
    for t in tensors:
        grad = t.grad
        assert grad is not None, "tensor received no gradient"
        numel = t.numel()
        if numel <= max_coords:
            coords = np.arange(numel)
        else:
            coords = rng.choice(numel, size=max_coords, replace=False)
        flat = t.data.view(-1)
        for c in coords:
            c = int(c)
            orig = flat[c].item()
            h = eps * max(1.0, abs(orig))
            flat[c] = orig + h
            with torch.no_grad():
                plus = loss_fn().item()
            flat[c] = orig - h
            with torch.no_grad():
                minus = loss_fn().item()
            flat[c] = orig
            fd = (plus - minus) / (2.0 * h)
            ag = grad.view(-1)[c].item()
            if abs(fd) < 1e-9 and abs(ag) < 1e-9:
                continue
            rel = abs(ag - fd) / max(abs(ag), abs(fd), 1e-6)
            worst = max(worst, rel)
            assert rel < rel_tol, (
                f"gradient mismatch at coord {c}: autograd {ag:.10g} vs "
                f"finite-difference {fd:.10g} (rel err {rel:.3g})"
            )
    return worst


def module_gradient_check(module: torch.nn.Module, make_loss, **kwargs) -> float:
    """check_gradients over every parameter of a float64 module."""
    params = [p for p in module.parameters() if p.requires_grad]
    return check_gradients(make_loss, params, **kwargs)


def tone(freq_hz: float, dur_s: float, sr: int = 8000, amp: float = 0.1, phase: float = 0.0) -> np.ndarray:
    t = np.arange(int(round(dur_s * sr))) / sr
    return amp * np.sin(2.0 * np.pi * freq_hz * t + phase)


def seeded_noise(n: int, seed: int = 0, amp: float = 0.1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return amp * rng.standard_normal(n)

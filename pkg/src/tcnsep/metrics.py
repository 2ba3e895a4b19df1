"""Scale-invariant SDR, the permutation-invariant utterance-level training
loss, SDR-improvement scoring, and report containers.

All SDR values are in dB and clamped to +-60 to keep losses finite near
perfect (or hopeless) reconstruction.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import Tensor

from .audio import Waveform

SDR_CLAMP_DB = 60.0
MAX_PIT_SOURCES = 6

# Published SDRi (dB) of reference systems on the standard WSJ0-2mix
# two-speaker benchmark. Documented reference values only: desk-scale runs of
# this package do not reproduce them (the benchmark needs the full corpus and
# long training). Keys match our separator variant names where applicable.
WSJ0_2MIX_PUBLISHED_SDRI = {
    "irm": 12.7,
    "conv_tasnet": 15.8,
    "porta": 17.3,
    "su": 17.9,
    "sh": 18.0,
    "pa": 18.2,
    "py": 18.4,
}

# Published mean SDR of the raw WSJ0-2mix mixture against its targets.
WSJ0_2MIX_PUBLISHED_BASELINE_SDR = 0.15

_TINY = 1e-300  # keeps log10 finite; clamping then hides the perturbation


def si_sdr(estimate: Tensor, reference: Tensor, clamp_db: float = SDR_CLAMP_DB) -> Tensor:
    """Scale-invariant SDR in dB over the trailing axis.

    The reference is rescaled onto the estimate by its projection
    coefficient, the residual is the distortion, and the energy ratio is
    reported in dB. Identical signals hit the +clamp; a zero estimate hits
    the -clamp; a zero-energy reference is an error.

    Args:
        estimate: (..., n) estimated signal.
        reference: (..., n) target signal, broadcastable against estimate.

    Returns:
        dB tensor with the trailing axis reduced.
    """
    if estimate.shape[-1] != reference.shape[-1]:
        raise ValueError(
            f"length mismatch: estimate {estimate.shape[-1]} vs reference {reference.shape[-1]}"
        )
    ref_energy = (reference * reference).sum(dim=-1)
    if bool((ref_energy == 0).any()):
        raise ValueError("reference has zero energy")
    proj = (reference * estimate).sum(dim=-1, keepdim=True) / ref_energy.unsqueeze(-1)
    scaled_ref = proj * reference
    distortion = scaled_ref - estimate
    num = (scaled_ref * scaled_ref).sum(dim=-1)
    den = (distortion * distortion).sum(dim=-1)
    sdr = 10.0 * (torch.log10(num + _TINY) - torch.log10(den + _TINY))
    est_energy = (estimate * estimate).sum(dim=-1)
    sdr = torch.where(est_energy == 0, torch.full_like(sdr, -clamp_db), sdr)
    return torch.clamp(sdr, -clamp_db, clamp_db)


def si_sdr_db(estimate, reference, sample_rate_check: bool = True) -> float:
    """si_sdr on Waveforms or 1-D arrays, returned as a plain float."""
    if isinstance(estimate, Waveform) and isinstance(reference, Waveform):
        if sample_rate_check and estimate.sample_rate_hz != reference.sample_rate_hz:
            raise ValueError("sample rate mismatch")
        est, ref = estimate.samples, reference.samples
    else:
        est = np.asarray(estimate, dtype=np.float64)
        ref = np.asarray(reference, dtype=np.float64)
    with torch.no_grad():
        value = si_sdr(torch.from_numpy(est.copy()), torch.from_numpy(ref.copy()))
    return float(value)


def _check_pit_shapes(estimates: Tensor, targets: Tensor) -> int:
    if estimates.dim() != 2 or targets.dim() != 2:
        raise ValueError("expected (S, n) estimate and target matrices")
    if estimates.shape != targets.shape:
        raise ValueError(f"shape mismatch: {tuple(estimates.shape)} vs {tuple(targets.shape)}")
    num_sources = estimates.shape[0]
    if num_sources > MAX_PIT_SOURCES:
        raise ValueError(
            f"{num_sources} sources would need {math.factorial(num_sources)} permutations; "
            f"limit is {MAX_PIT_SOURCES}"
        )
    return num_sources


@dataclass(frozen=True)
class PitResult:
    """Best-permutation assignment of estimates to targets.

    permutation[j] is the estimate index assigned to target j. mean_sdr and
    per_source_sdr stay attached to the autograd graph.
    """

    mean_sdr: Tensor
    permutation: tuple[int, ...]
    per_source_sdr: Tensor


def pit_best_sdr(estimates: Tensor, targets: Tensor) -> PitResult:
    """Exhaustive best-permutation mean si_sdr for (S, n) signal stacks.

    Ties resolve to the lexicographically smallest permutation (the search
    enumerates permutations in lexicographic order and only a strict
    improvement replaces the incumbent).
    """
    num_sources = _check_pit_shapes(estimates, targets)
    pairwise = si_sdr(estimates.unsqueeze(1), targets.unsqueeze(0))  # [i, j] = est_i vs tgt_j
    best_perm: tuple[int, ...] | None = None
    best_mean: Tensor | None = None
    for perm in itertools.permutations(range(num_sources)):
        mean = torch.stack([pairwise[perm[j], j] for j in range(num_sources)]).mean()
        if best_mean is None or mean.item() > best_mean.item():
            best_mean, best_perm = mean, perm
    assert best_perm is not None and best_mean is not None
    per_source = torch.stack([pairwise[best_perm[j], j] for j in range(num_sources)])
    return PitResult(best_mean, best_perm, per_source)


def usdr_pit_loss(estimates: Tensor, targets: Tensor) -> tuple[Tensor, tuple[int, ...]]:
    """Negative best-permutation mean si_sdr on whole utterances.

    Estimates must already be reassembled into complete utterances; the loss
    is differentiable through the selected permutation.
    """
    result = pit_best_sdr(estimates, targets)
    return -result.mean_sdr, result.permutation


def mixture_baseline_sdr(mixture: Tensor, targets: Tensor) -> Tensor:
    """Mean si_sdr obtained by presenting the raw mixture as the estimate of
    every target; the zero point of SDR improvement."""
    if mixture.dim() != 1:
        raise ValueError("mixture must be 1-D")
    return si_sdr(mixture.unsqueeze(0).expand_as(targets), targets).mean()


def sdri(estimates: Tensor, targets: Tensor, mixture: Tensor) -> Tensor:
    """Best-permutation mean si_sdr minus the mixture baseline."""
    return pit_best_sdr(estimates, targets).mean_sdr - mixture_baseline_sdr(mixture, targets)


@dataclass(frozen=True)
class UtteranceScore:
    """Per-utterance separation scores at the best permutation."""

    utt_id: str
    per_source_sdr: tuple[float, ...]
    permutation: tuple[int, ...]
    sdr: float
    baseline_sdr: float

    @property
    def sdri(self) -> float:
        return self.sdr - self.baseline_sdr


def score_utterance(
    utt_id: str,
    estimates: list[Waveform],
    targets: list[Waveform],
    mixture: Waveform,
) -> UtteranceScore:
    """PIT-matched SDR and SDRi for one utterance of separated Waveforms."""
    est = torch.from_numpy(np.stack([w.samples for w in estimates]))
    tgt = torch.from_numpy(np.stack([w.samples for w in targets]))
    mix = torch.from_numpy(mixture.samples.copy())
    with torch.no_grad():
        result = pit_best_sdr(est, tgt)
        baseline = mixture_baseline_sdr(mix, tgt)
    return UtteranceScore(
        utt_id=utt_id,
        per_source_sdr=tuple(float(v) for v in result.per_source_sdr),
        permutation=result.permutation,
        sdr=float(result.mean_sdr),
        baseline_sdr=float(baseline),
    )


@dataclass(frozen=True)
class SdrReport:
    """Aggregate of per-utterance scores; means are arithmetic means."""

    per_utterance: tuple[UtteranceScore, ...]
    system: str = "model"

    def __post_init__(self):
        object.__setattr__(self, "per_utterance", tuple(self.per_utterance))
        if not self.per_utterance:
            raise ValueError("report needs at least one utterance")

    @property
    def mean_sdr(self) -> float:
        return float(np.mean([u.sdr for u in self.per_utterance]))

    @property
    def mean_sdri(self) -> float:
        return float(np.mean([u.sdri for u in self.per_utterance]))

    @property
    def baseline(self) -> float:
        return float(np.mean([u.baseline_sdr for u in self.per_utterance]))

    def to_json(self) -> str:
        doc = {
            "system": self.system,
            "per_utt": [
                {
                    "utt_id": u.utt_id,
                    "sdr": u.sdr,
                    "sdri": u.sdri,
                    "perm": list(u.permutation),
                    "per_source_sdr": list(u.per_source_sdr),
                    "baseline_sdr": u.baseline_sdr,
                }
                for u in self.per_utterance
            ],
            "mean_sdr": self.mean_sdr,
            "mean_sdri": self.mean_sdri,
            "baseline": self.baseline,
        }
        return json.dumps(doc, indent=2)

    def save_json(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["utt_id", "sdr", "sdri", "perm"])
            for u in self.per_utterance:
                writer.writerow([u.utt_id, f"{u.sdr:.6f}", f"{u.sdri:.6f}", "-".join(map(str, u.permutation))])

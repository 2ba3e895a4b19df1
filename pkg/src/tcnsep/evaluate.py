"""Evaluation: run a separation system over a manifest split and aggregate
PIT-matched SDR / SDR-improvement scores into a report.

Three systems share the plumbing: a trained model checkpoint, the
ideal-ratio-mask oracle (upper bound), and the identity system that returns
the mixture for every source (zero SDR improvement by construction).
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch

from .audio import Waveform
from .checkpoint import CheckpointData, load_checkpoint, restore_model
from .manifest import Manifest, load_entry_mixture
from .metrics import SdrReport, UtteranceScore, score_utterance
from .model import SeparationModel
from .stft import irm_oracle
from .train import RunConfig, forward_utterance

log = logging.getLogger(__name__)

SYSTEMS = ("model", "irm", "identity")


def separate_utterance(
    model: SeparationModel, mixture: Waveform, segment_seconds: float = 4.0
) -> list[Waveform]:
    """Segment, forward, and reassemble one mixture into source Waveforms."""
    seg_len = max(1, int(round(segment_seconds * mixture.sample_rate_hz)))
    mix = torch.from_numpy(mixture.samples.copy()).to(torch.float32)
    model.eval()
    with torch.no_grad():
        est = forward_utterance(model, mix, seg_len)
    return [Waveform(est[s].numpy().astype(np.float64), mixture.sample_rate_hz) for s in range(est.shape[0])]


def model_from_checkpoint(ckpt: CheckpointData | str | Path) -> tuple[SeparationModel, RunConfig]:
    """Rebuild the model a checkpoint describes and load its parameters."""
    if not isinstance(ckpt, CheckpointData):
        ckpt = load_checkpoint(ckpt)
    if ckpt.config is None:
        raise ValueError("checkpoint lacks a run config; cannot rebuild the model")
    cfg = RunConfig.from_dict(ckpt.config)
    model = SeparationModel(cfg.frontend, cfg.separator)
    restore_model(model, ckpt)
    model.eval()
    return model, cfg


def evaluate(
    manifest: Manifest,
    split: str = "test",
    system: str = "model",
    model: SeparationModel | None = None,
    segment_seconds: float = 4.0,
    sample_rate_hz: int = 8000,
) -> SdrReport:
    """Score every utterance of a split with the chosen system.

    Utterance ids are "<split>-<index>"; the report is a pure function of
    (system parameters, manifest, split).
    """
    if system not in SYSTEMS:
        raise ValueError(f"system must be one of {SYSTEMS}, got {system!r}")
    if system == "model" and model is None:
        raise ValueError("system 'model' needs a model instance")
    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"manifest has no '{split}' entries")

    scores: list[UtteranceScore] = []
    for idx, entry in enumerate(entries):
        sample = load_entry_mixture(entry, sample_rate_hz)
        targets = list(sample.sources)
        if system == "model":
            estimates = separate_utterance(model, sample.mixture, segment_seconds)
        elif system == "irm":
            estimates = irm_oracle(targets, sample.mixture)
        else:
            estimates = [sample.mixture for _ in targets]
        scores.append(score_utterance(f"{split}-{idx:05d}", estimates, targets, sample.mixture))
        log.debug("scored %s: sdr %.2f dB", scores[-1].utt_id, scores[-1].sdr)
    return SdrReport(tuple(scores), system=system)


def evaluate_checkpoint(
    ckpt_path, manifest: Manifest, split: str = "test", segment_seconds: float | None = None
) -> SdrReport:
    """Load a checkpoint and evaluate its model on a manifest split."""
    model, cfg = model_from_checkpoint(ckpt_path)
    seconds = cfg.segment_seconds if segment_seconds is None else segment_seconds
    return evaluate(
        manifest,
        split=split,
        system="model",
        model=model,
        segment_seconds=seconds,
        sample_rate_hz=cfg.sample_rate_hz,
    )


def write_report(report: SdrReport, out_dir) -> tuple[Path, Path]:
    """Write report.json and report.csv; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    csv_path = out_dir / "report.csv"
    report.save_json(json_path)
    report.save_csv(csv_path)
    return json_path, csv_path

"""Deterministic training loop.

One master seed fans out into named substreams (parameter init, data order)
so runs are reproducible end to end. Training consumes fixed-length
segments for memory reasons, but the loss is computed on whole utterances:
per-segment estimates are concatenated back (differentiably) before the
permutation-invariant SDR loss.

Outputs in the run directory: ``loss.log`` (one "step loss" pair per line)
and ``ckpt_<step>.bin`` checkpoints.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .blocks import ConvBlockConfig, TcnConfig
from .checkpoint import save_checkpoint
from .frontend import FrontendConfig
from .manifest import Manifest, load_entry_mixture
from .metrics import mixture_baseline_sdr, pit_best_sdr, usdr_pit_loss
from .model import SeparationModel
from .separators import SeparatorConfig

log = logging.getLogger(__name__)

OPTIMIZER_METHODS = ("adam",)


def substream_seed(master_seed: int, name: str) -> int:
    """Stable 63-bit seed for a named random substream of a master seed."""
    digest = hashlib.sha256(f"{master_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


@dataclass(frozen=True)
class OptimizerConfig:
    """Gradient-descent settings: method name, step size, clip threshold."""

    method: str = "adam"
    learning_rate: float = 1e-3
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.method not in OPTIMIZER_METHODS:
            raise ValueError(f"optimizer method must be one of {OPTIMIZER_METHODS}")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run needs besides the manifest."""

    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    separator: SeparatorConfig = field(default_factory=SeparatorConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    segment_seconds: float = 4.0
    batch_size: int = 1
    max_steps: int = 100
    checkpoint_interval: int = 100
    eval_interval: int = 0  # 0: no mid-run training-set evaluation
    early_stop_gain_db: float = 0.0  # 0: never stop early
    sample_rate_hz: int = 8000

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.segment_seconds <= 0:
            raise ValueError("segment_seconds must be positive")
        if min(self.batch_size, self.max_steps, self.checkpoint_interval, self.sample_rate_hz) < 1:
            raise ValueError("batch_size, max_steps, checkpoint_interval, sample_rate_hz must be >= 1")
        if self.eval_interval < 0 or self.early_stop_gain_db < 0:
            raise ValueError("eval_interval and early_stop_gain_db must be >= 0")
        if self.separator.rep_channels != self.frontend.num_filters:
            raise ValueError(
                "separator.rep_channels must equal frontend.num_filters "
                f"({self.separator.rep_channels} != {self.frontend.num_filters})"
            )

    @property
    def segment_len(self) -> int:
        return max(1, int(round(self.segment_seconds * self.sample_rate_hz)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        frontend = FrontendConfig(**d.pop("frontend", {}) or {})
        separator = separator_config_from_dict(d.pop("separator", {}) or {})
        optimizer = OptimizerConfig(**d.pop("optimizer", {}) or {})
        return cls(frontend=frontend, separator=separator, optimizer=optimizer, **d)


def separator_config_from_dict(d: dict) -> SeparatorConfig:
    """Build a SeparatorConfig from nested plain dicts (config files,
    checkpoint headers); absent fields keep their defaults."""
    d = dict(d)
    tcn_d = dict(d.pop("tcn", {}) or {})
    block_d = dict(tcn_d.pop("block", {}) or {})
    block_d.setdefault("in_channels", 128)
    block_d.setdefault("hidden_channels", 128)
    block = ConvBlockConfig(**block_d)
    tcn = TcnConfig(dilations=tuple(tcn_d.pop("dilations", (1, 2, 4, 4))), block=block)
    if tcn_d:
        raise ValueError(f"unknown tcn config keys: {sorted(tcn_d)}")
    if "py_branch_depths" in d:
        d["py_branch_depths"] = tuple(d["py_branch_depths"])
    return SeparatorConfig(tcn=tcn, **d)


def forward_utterance(model: SeparationModel, mixture: torch.Tensor, segment_len: int) -> torch.Tensor:
    """Run a full utterance through the model segment-wise and concatenate
    the per-segment estimates back into (S, n); differentiable throughout."""
    if mixture.dim() != 1:
        raise ValueError("mixture must be a 1-D tensor")
    n = mixture.shape[-1]
    num_segments = max(1, -(-n // segment_len))
    total = num_segments * segment_len
    if total > n:
        mixture = torch.nn.functional.pad(mixture, (0, total - n))
    segments = mixture.view(num_segments, segment_len)
    outs = model(segments)  # (M, S, segment_len)
    joined = outs.permute(1, 0, 2).reshape(model.num_sources, total)
    return joined[:, :n]


@dataclass
class TrainResult:
    """Summary handed back by train()."""

    steps: int
    losses: list[tuple[int, float]]
    checkpoints: list[Path]
    final_checkpoint: Path
    stopped_early: bool
    baseline_sdr: float
    final_train_usdr: float | None


def _load_utterances(manifest: Manifest, split: str, sample_rate_hz: int):
    """Preload (mixture tensor, target stack tensor) pairs for a split."""
    entries = manifest.split(split)
    pairs = []
    for entry in entries:
        sample = load_entry_mixture(entry, sample_rate_hz)
        mix = torch.from_numpy(sample.mixture.samples.copy()).to(torch.float32)
        tgt = torch.from_numpy(np.stack([s.samples for s in sample.sources])).to(torch.float32)
        pairs.append((mix, tgt))
    return pairs


def training_set_usdr(model: SeparationModel, utterances, segment_len: int) -> float:
    """Mean best-permutation si_sdr over preloaded utterances, no gradients."""
    model.eval()
    scores = []
    with torch.no_grad():
        for mix, tgt in utterances:
            est = forward_utterance(model, mix, segment_len)
            scores.append(float(pit_best_sdr(est, tgt).mean_sdr))
    model.train()
    return float(np.mean(scores))


def train(cfg: RunConfig, manifest: Manifest, out_dir, model_hook=None) -> TrainResult:
    """Run the training loop; deterministic given (cfg, manifest).

    ``model_hook``, when given, is called once with the freshly built model
    before the first step; callers can attach probes or forward hooks.
    """
    utterances = _load_utterances(manifest, "train", cfg.sample_rate_hz)
    if not utterances:
        raise ValueError("manifest has no train entries")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(substream_seed(cfg.seed, "init"))
    model = SeparationModel(cfg.frontend, cfg.separator)
    if model_hook is not None:
        model_hook(model)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.optimizer.learning_rate)
    data_rng = np.random.default_rng(substream_seed(cfg.seed, "data"))

    with torch.no_grad():
        baseline = float(
            np.mean([float(mixture_baseline_sdr(mix, tgt)) for mix, tgt in utterances])
        )
    log.info("train: %d utterances, baseline si_sdr %.2f dB", len(utterances), baseline)

    seg_len = cfg.segment_len
    losses: list[tuple[int, float]] = []
    checkpoints: list[Path] = []
    stopped_early = False
    final_usdr: float | None = None
    started = time.monotonic()

    def write_checkpoint(step: int) -> Path:
        path = out_dir / f"ckpt_{step}.bin"
        save_checkpoint(
            path,
            model,
            step=step,
            config=cfg.to_dict(),
            optimizer=optimizer,
            numpy_rng_state=data_rng.bit_generator.state,
        )
        checkpoints.append(path)
        return path

    step = 0
    for step in range(1, cfg.max_steps + 1):
        picks = data_rng.integers(0, len(utterances), size=min(cfg.batch_size, len(utterances)))
        optimizer.zero_grad()
        batch_losses = []
        for i in picks:
            mix, tgt = utterances[int(i)]
            est = forward_utterance(model, mix, seg_len)
            loss_i, _ = usdr_pit_loss(est, tgt)
            batch_losses.append(loss_i)
        loss = torch.stack(batch_losses).mean()
        if not torch.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss {loss.item()} at step {step}; aborting (check input "
                "scaling and learning rate)"
            )
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.optimizer.clip_norm)
        optimizer.step()
        losses.append((step, float(loss.detach())))

        if step % cfg.checkpoint_interval == 0:
            write_checkpoint(step)
        if cfg.eval_interval and step % cfg.eval_interval == 0:
            final_usdr = training_set_usdr(model, utterances, seg_len)
            log.info(
                "step %d: loss %.3f, train uSDR %.2f dB (baseline %+.2f dB), %.1f s elapsed",
                step, float(loss.detach()), final_usdr, final_usdr - baseline,
                time.monotonic() - started,
            )
            if cfg.early_stop_gain_db and final_usdr >= baseline + cfg.early_stop_gain_db:
                stopped_early = True
                break

    if not checkpoints or checkpoints[-1].name != f"ckpt_{step}.bin":
        write_checkpoint(step)
    with open(out_dir / "loss.log", "w") as fh:
        for s, value in losses:
            fh.write(f"{s} {value:.6f}\n")
    return TrainResult(
        steps=step,
        losses=losses,
        checkpoints=checkpoints,
        final_checkpoint=checkpoints[-1],
        stopped_early=stopped_early,
        baseline_sdr=baseline,
        final_train_usdr=final_usdr,
    )

"""Waveform containers, WAV I/O, SNR-controlled mixing, and utterance segmentation.

All signals are mono and carried as 1-D float64 arrays with an explicit
sample rate. Mixtures are exact sample-wise sums of their (rescaled)
sources, so separation targets and mixture stay consistent by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

DEFAULT_SAMPLE_RATE = 8000

# |mixture - sum(sources)| must stay below this fraction of the mixture peak
MIX_SUM_RTOL = 1e-6


@dataclass(frozen=True)
class Waveform:
    """Mono audio signal: float64 samples (nominal range [-1, 1]) plus sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {samples.shape}")
        if samples.size < 1:
            raise ValueError("waveform must contain at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        samples = samples.copy()
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def num_samples(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def power(self) -> float:
        """Mean squared amplitude over the full utterance."""
        return float(np.mean(np.square(self.samples)))

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples)))


@dataclass(frozen=True)
class MixtureSample:
    """A mixture waveform plus the aligned source waveforms it was built from.

    Sources are stored post-scaling, so ``mixture == sum(sources)`` holds
    sample-wise (validated on construction).
    """

    mixture: Waveform
    sources: tuple[Waveform, ...]
    snr_db: float
    source_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "source_ids", tuple(self.source_ids))
        if len(self.sources) < 2:
            raise ValueError("a mixture needs at least 2 sources")
        if len(self.source_ids) != len(self.sources):
            raise ValueError("source_ids must match the number of sources")
        for src in self.sources:
            if src.num_samples != self.mixture.num_samples:
                raise ValueError("all sources must match the mixture length")
            if src.sample_rate_hz != self.mixture.sample_rate_hz:
                raise ValueError("all sources must match the mixture sample rate")
        total = np.sum([s.samples for s in self.sources], axis=0)
        err = np.max(np.abs(self.mixture.samples - total))
        if err > MIX_SUM_RTOL * self.mixture.peak():
            raise ValueError(
                f"mixture differs from the sum of its sources by {err:.3g}"
            )

    @property
    def num_sources(self) -> int:
        return len(self.sources)


def load_wav(path: str | Path, target_sr: int | None = DEFAULT_SAMPLE_RATE) -> Waveform:
    """Load a mono WAV file (16-bit PCM or float) and resample on ingest.

    Args:
        path: WAV file path.
        target_sr: output sample rate; None keeps the file's native rate.

    Returns:
        Waveform at ``target_sr`` with samples scaled to [-1, 1] for PCM input.
    """
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}")
    w = Waveform(samples, rate)
    if target_sr is not None and target_sr != rate:
        w = resample(w, target_sr)
    return w


def save_wav(path: str | Path, w: Waveform, fmt: str = "float32") -> None:
    """Write a waveform as mono WAV, either 32-bit float or 16-bit PCM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "float32":
        wavfile.write(str(path), w.sample_rate_hz, w.samples.astype(np.float32))
    elif fmt == "pcm16":
        clipped = np.clip(w.samples, -1.0, 32767.0 / 32768.0)
        wavfile.write(
            str(path), w.sample_rate_hz, np.round(clipped * 32768.0).astype(np.int16)
        )
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")


def resample(w: Waveform, target_sr: int) -> Waveform:
    if target_sr <= 0:
        raise ValueError("target sample rate must be positive")
    if target_sr == w.sample_rate_hz:
        return w
    g = math.gcd(target_sr, w.sample_rate_hz)
    out = resample_poly(w.samples, target_sr // g, w.sample_rate_hz // g)
    return Waveform(out, target_sr)


def measure_snr_db(target: Waveform, interferer: Waveform) -> float:
    """Power ratio of target over interferer in dB (full-utterance mean square)."""
    p_t, p_i = target.power(), interferer.power()
    if p_i == 0.0 or p_t == 0.0:
        raise ValueError("SNR is undefined for zero-energy signals")
    return 10.0 * math.log10(p_t / p_i)


def scale_to_snr(target: Waveform, interferer: Waveform, snr_db: float) -> Waveform:
    """Rescale ``interferer`` so the target-to-interferer power ratio is ``snr_db``.

    Power is the mean squared amplitude over the whole utterance. The target
    itself is never rescaled.
    """
    if target.num_samples != interferer.num_samples:
        raise ValueError(
            f"length mismatch: target {target.num_samples} vs "
            f"interferer {interferer.num_samples}"
        )
    if target.sample_rate_hz != interferer.sample_rate_hz:
        raise ValueError("sample rate mismatch between target and interferer")
    p_t, p_i = target.power(), interferer.power()
    if p_i == 0.0:
        raise ValueError("cannot scale a zero-energy interferer to a target SNR")
    if p_t == 0.0:
        raise ValueError("SNR is undefined for a zero-energy target")
    gain = math.sqrt(p_t / (p_i * 10.0 ** (snr_db / 10.0)))
    return Waveform(gain * interferer.samples, interferer.sample_rate_hz)


def synth_mixture(
    sources: Sequence[Waveform],
    snr_db: float,
    ids: Sequence[str] | None = None,
) -> MixtureSample:
    """Linearly mix two or more sources at a controlled SNR.

    The first source is the 0 dB reference and is never rescaled; every
    other source is rescaled so its power sits ``snr_db`` below the
    reference. Sources of unequal length are truncated to the shortest.

    Args:
        sources: at least two waveforms at a common sample rate.
        snr_db: reference-to-interferer power ratio in dB.
        ids: optional labels, defaults to ``s1, s2, ...``.

    Returns:
        MixtureSample whose mixture is the exact sum of the stored sources.
    """
    if len(sources) < 2:
        raise ValueError("need at least 2 sources to form a mixture")
    sr = sources[0].sample_rate_hz
    for s in sources[1:]:
        if s.sample_rate_hz != sr:
            raise ValueError("all sources must share one sample rate")
    n = min(s.num_samples for s in sources)
    trimmed = [Waveform(s.samples[:n], sr) for s in sources]
    ref = trimmed[0]
    scaled = [ref] + [scale_to_snr(ref, s, snr_db) for s in trimmed[1:]]
    mixture = Waveform(np.sum([s.samples for s in scaled], axis=0), sr)
    if ids is None:
        ids = [f"s{i + 1}" for i in range(len(scaled))]
    return MixtureSample(mixture, tuple(scaled), float(snr_db), tuple(ids))


@dataclass(frozen=True)
class SegmentationInfo:
    """Bookkeeping needed to reassemble segments into the original utterance."""

    orig_len: int
    seg_len: int
    hop: int
    pad: int
    sample_rate_hz: int


def num_segments(orig_len: int, seg_len: int, hop: int) -> int:
    if orig_len <= seg_len:
        return 1
    return math.ceil((orig_len - seg_len) / hop) + 1


def segment_utterance(
    w: Waveform, seg_len: int, hop: int | None = None
) -> tuple[np.ndarray, SegmentationInfo]:
    """Cut an utterance into fixed-length segments.

    The default hop equals ``seg_len`` (non-overlapping). The tail that does
    not fill a segment is zero-padded and the pad length recorded so
    :func:`reassemble` can restore the utterance exactly.

    Returns:
        (segments, info) where segments has shape (num_segments, seg_len).
    """
    if seg_len < 1:
        raise ValueError("seg_len must be >= 1")
    if hop is None:
        hop = seg_len
    if hop < 1:
        raise ValueError("hop must be >= 1")
    if hop > seg_len:
        raise ValueError(f"hop ({hop}) must not exceed seg_len ({seg_len})")
    n = w.num_samples
    m = num_segments(n, seg_len, hop)
    total = (m - 1) * hop + seg_len
    pad = total - n
    padded = np.concatenate([w.samples, np.zeros(pad)])
    segments = np.stack([padded[i * hop : i * hop + seg_len] for i in range(m)])
    info = SegmentationInfo(n, seg_len, hop, pad, w.sample_rate_hz)
    return segments, info


def reassemble(segments: np.ndarray, info: SegmentationInfo) -> Waveform:
    """Invert :func:`segment_utterance`.

    Where segments overlap (hop < seg_len), each sample is taken from the
    earliest segment covering it, which keeps the round trip exact.
    """
    segments = np.asarray(segments, dtype=np.float64)
    m = num_segments(info.orig_len, info.seg_len, info.hop)
    if segments.shape != (m, info.seg_len):
        raise ValueError(
            f"expected segments of shape {(m, info.seg_len)}, got {segments.shape}"
        )
    total = (m - 1) * info.hop + info.seg_len
    out = np.zeros(total)
    for i in reversed(range(m)):
        out[i * info.hop : i * info.hop + info.seg_len] = segments[i]
    return Waveform(out[: info.orig_len], info.sample_rate_hz)

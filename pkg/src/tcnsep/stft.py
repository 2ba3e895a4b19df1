"""Short-time Fourier analysis with perfect reconstruction, plus the
ideal-ratio-mask oracle separator built on it.

The analysis/synthesis pair uses one window for both directions and divides
by the squared-window overlap envelope, so any (window, hop) whose envelope
is constant reconstructs exactly. The signal is zero-padded by one window on
both sides so every sample has full window coverage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import Waveform

WINDOW_KINDS = ("sqrt_hann", "rect")

DEFAULT_WIN_LEN = 256  # 32 ms at 8 kHz
DEFAULT_HOP = 128

_COLA_TOL = 1e-10
_SILENT_EPS = 0.0  # all-silent means exactly zero magnitude everywhere


def make_window(kind: str, win_len: int) -> np.ndarray:
    """Analysis/synthesis window samples, periodic form."""
    if win_len < 1:
        raise ValueError("win_len must be >= 1")
    if kind == "sqrt_hann":
        n = np.arange(win_len)
        return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / win_len))
    if kind == "rect":
        return np.ones(win_len)
    raise ValueError(f"window must be one of {WINDOW_KINDS}, got {kind!r}")


def _overlap_envelope(window: np.ndarray, hop: int, length: int) -> np.ndarray:
    """Sum of squared windows at every hop offset over ``length`` samples."""
    env = np.zeros(length)
    w2 = window**2
    for start in range(0, length - len(window) + 1, hop):
        env[start : start + len(window)] += w2
    return env


def verify_cola(window: np.ndarray, hop: int) -> None:
    """Raise unless the squared-window overlap envelope is constant, i.e. the
    (window, hop) pair reconstructs exactly."""
    win_len = len(window)
    if not 0 < hop <= win_len:
        raise ValueError(f"hop must be in [1, win_len], got hop={hop} win_len={win_len}")
    if win_len % hop != 0:
        raise ValueError(f"win_len {win_len} is not a multiple of hop {hop}")
    env = _overlap_envelope(window, hop, 4 * win_len)
    interior = env[win_len : 3 * win_len]
    spread = float(np.ptp(interior))
    if interior.min() <= 0 or spread > _COLA_TOL * interior.mean():
        raise ValueError(
            f"window/hop pair is not constant-overlap-add (envelope varies by {spread:.3g})"
        )


@dataclass(frozen=True)
class StftGrid:
    """Complex TF grid (frames, bins) with the geometry needed to invert it.

    ``num_samples`` and ``sample_rate_hz`` record the analyzed waveform so
    the inverse transform reproduces it sample for sample.
    """

    values: np.ndarray
    win_len: int
    hop: int
    window: str
    num_samples: int
    sample_rate_hz: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ValueError(f"grid values must be 2-D (frames, bins), got {v.ndim}-D")
        if v.shape[1] != self.win_len // 2 + 1:
            raise ValueError(f"expected {self.win_len // 2 + 1} bins for win_len {self.win_len}")

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_bins(self) -> int:
        return self.values.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def with_values(self, values: np.ndarray) -> "StftGrid":
        return StftGrid(values, self.win_len, self.hop, self.window, self.num_samples, self.sample_rate_hz)


def stft(
    w: Waveform,
    win_len: int = DEFAULT_WIN_LEN,
    hop: int = DEFAULT_HOP,
    window: str = "sqrt_hann",
) -> StftGrid:
    """Windowed real FFT analysis of a waveform into a (frames, bins) grid."""
    win = make_window(window, win_len)
    verify_cola(win, hop)
    x = np.concatenate([np.zeros(win_len), w.samples, np.zeros(win_len)])
    total = len(x)
    num_frames = (total - win_len) // hop + 1
    frames = np.stack([x[i * hop : i * hop + win_len] for i in range(num_frames)])
    values = np.fft.rfft(frames * win, axis=-1)
    return StftGrid(values, win_len, hop, window, w.num_samples, w.sample_rate_hz)


def istft(grid: StftGrid) -> Waveform:
    """Inverse of stft: windowed overlap-add divided by the overlap envelope,
    with the analysis padding stripped."""
    win = make_window(grid.window, grid.win_len)
    verify_cola(win, grid.hop)
    total = (grid.num_frames - 1) * grid.hop + grid.win_len
    out = np.zeros(total)
    chunks = np.fft.irfft(grid.values, n=grid.win_len, axis=-1) * win
    for i in range(grid.num_frames):
        out[i * grid.hop : i * grid.hop + grid.win_len] += chunks[i]
    env = _overlap_envelope(win, grid.hop, total)
    np.divide(out, env, out=out, where=env > 1e-12)
    samples = out[grid.win_len : grid.win_len + grid.num_samples]
    return Waveform(samples, grid.sample_rate_hz)


def irm_masks(source_grids: list[StftGrid]) -> list[np.ndarray]:
    """Per-source magnitude-share masks; cells where every source is silent
    get the uniform value 1/S."""
    if not source_grids:
        raise ValueError("need at least one source")
    mags = [g.magnitude() for g in source_grids]
    denom = np.sum(mags, axis=0)
    silent = denom <= _SILENT_EPS
    safe = np.where(silent, 1.0, denom)
    uniform = 1.0 / len(source_grids)
    return [np.where(silent, uniform, m / safe) for m in mags]


def irm_oracle(
    sources: list[Waveform],
    mixture: Waveform,
    win_len: int = DEFAULT_WIN_LEN,
    hop: int = DEFAULT_HOP,
    window: str = "sqrt_hann",
) -> list[Waveform]:
    """Oracle separation: mask the mixture grid by each source's magnitude
    share (mixture phase retained) and invert back to waveforms."""
    if len(sources) < 2:
        raise ValueError("need at least two sources")
    for s in sources:
        if s.num_samples != mixture.num_samples or s.sample_rate_hz != mixture.sample_rate_hz:
            raise ValueError("sources and mixture must share length and sample rate")
    mix_grid = stft(mixture, win_len, hop, window)
    source_grids = [stft(s, win_len, hop, window) for s in sources]
    masks = irm_masks(source_grids)
    return [istft(mix_grid.with_values(mix_grid.values * m)) for m in masks]

"""Dataset manifests: speaker pairing, SNR sampling, splits, and persistence.

A manifest is a newline-delimited JSON file, one record per mixture with
keys ``{s1, s2, snr_db, split, dur_s}``. Train and test splits never share
a speaker (speaker identity = the utterance's parent directory name).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import DEFAULT_SAMPLE_RATE, MixtureSample, Waveform, load_wav, save_wav, synth_mixture

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")

# fraction of entries assigned to valid / test (remainder goes to train)
VALID_FRACTION = 0.1
TEST_FRACTION = 0.1
# fraction of speakers reserved for the test split
TEST_SPEAKER_FRACTION = 0.25


@dataclass(frozen=True)
class ManifestEntry:
    s1: str
    s2: str
    snr_db: float
    split: str
    dur_s: float

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"invalid split {self.split!r}, expected one of {SPLITS}")

    def speakers(self) -> tuple[str, str]:
        return Path(self.s1).parent.name, Path(self.s2).parent.name


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    seed: int | None = None

    def split(self, name: str) -> list[ManifestEntry]:
        if name not in SPLITS:
            raise ValueError(f"invalid split {name!r}, expected one of {SPLITS}")
        return [e for e in self.entries if e.split == name]

    def speakers(self, split_name: str) -> set[str]:
        out: set[str] = set()
        for e in self.split(split_name):
            out.update(e.speakers())
        return out

    def validate(self, snr_range: tuple[float, float] | None = None, check_files: bool = True) -> None:
        """Enforce manifest invariants: files exist, SNR in range, splits speaker-disjoint."""
        if check_files:
            for e in self.entries:
                for p in (e.s1, e.s2):
                    if not Path(p).is_file():
                        raise FileNotFoundError(f"manifest references missing file {p}")
        if snr_range is not None:
            lo, hi = snr_range
            for e in self.entries:
                if not lo <= e.snr_db <= hi:
                    raise ValueError(
                        f"entry snr {e.snr_db} outside configured range [{lo}, {hi}]"
                    )
        overlap = self.speakers("train") & self.speakers("test")
        if overlap:
            raise ValueError(f"speakers shared between train and test: {sorted(overlap)}")

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for e in self.entries:
                rec = {
                    "s1": e.s1,
                    "s2": e.s2,
                    "snr_db": e.snr_db,
                    "split": e.split,
                    "dur_s": e.dur_s,
                }
                f.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, path: str | Path, check_files: bool = True) -> "Manifest":
        entries = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                try:
                    entries.append(
                        ManifestEntry(
                            s1=rec["s1"],
                            s2=rec["s2"],
                            snr_db=float(rec["snr_db"]),
                            split=rec["split"],
                            dur_s=float(rec["dur_s"]),
                        )
                    )
                except KeyError as exc:
                    raise ValueError(f"{path}:{lineno}: missing manifest key {exc}") from exc
        m = cls(entries=entries, seed=None)
        m.validate(check_files=check_files)
        return m


def list_corpus(corpus_root: str | Path) -> dict[str, list[str]]:
    """Map speaker directory name -> sorted absolute WAV paths."""
    root = Path(corpus_root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root {root} does not exist")
    speakers: dict[str, list[str]] = {}
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        wavs = sorted(str(p.resolve()) for p in d.glob("*.wav"))
        if wavs:
            speakers[d.name] = wavs
    return speakers


def _wav_duration_s(path: str) -> float:
    return load_wav(path, target_sr=None).duration_s


def _split_counts(pair_count: int) -> dict[str, int]:
    n_valid = int(pair_count * VALID_FRACTION)
    n_test = int(pair_count * TEST_FRACTION)
    return {"train": pair_count - n_valid - n_test, "valid": n_valid, "test": n_test}


def build_manifest(
    corpus_root: str | Path,
    pair_count: int,
    snr_range: tuple[float, float],
    seed: int,
) -> Manifest:
    """Pair utterances from distinct speakers into a deterministic manifest.

    Entries are split 80/10/10 into train/valid/test by count. Test entries
    draw only from a reserved speaker pool so train and test are
    speaker-disjoint; with fewer than 4 speakers no test pool can be formed
    and the test entries are folded into train.

    The result is a pure function of the corpus listing and the seed.
    """
    if pair_count < 1:
        raise ValueError("pair_count must be >= 1")
    lo, hi = snr_range
    if hi < lo:
        raise ValueError(f"invalid snr_range [{lo}, {hi}]")
    speakers = list_corpus(corpus_root)
    if len(speakers) < 2:
        raise ValueError(
            f"corpus {corpus_root} has {len(speakers)} speaker(s) with audio; need >= 2"
        )
    counts = _split_counts(pair_count)
    rng = np.random.default_rng(seed)
    names = list(speakers)
    order = rng.permutation(len(names))
    shuffled = [names[i] for i in order]

    if counts["test"] > 0 and len(names) >= 4:
        n_test_spk = max(2, round(len(names) * TEST_SPEAKER_FRACTION))
        test_pool = shuffled[:n_test_spk]
        main_pool = shuffled[n_test_spk:]
    else:
        if counts["test"] > 0:
            log.warning(
                "corpus has %d speakers, too few for a speaker-disjoint test "
                "split; folding %d test entries into train",
                len(names),
                counts["test"],
            )
            counts["train"] += counts["test"]
            counts["test"] = 0
        test_pool = []
        main_pool = shuffled

    entries: list[ManifestEntry] = []
    durations: dict[str, float] = {}
    for split in SPLITS:
        pool = test_pool if split == "test" else main_pool
        for _ in range(counts[split]):
            i, j = rng.choice(len(pool), size=2, replace=False)
            spk_a, spk_b = pool[int(i)], pool[int(j)]
            s1 = speakers[spk_a][int(rng.integers(len(speakers[spk_a])))]
            s2 = speakers[spk_b][int(rng.integers(len(speakers[spk_b])))]
            snr = float(rng.uniform(lo, hi))
            for p in (s1, s2):
                if p not in durations:
                    durations[p] = _wav_duration_s(p)
            dur = min(durations[s1], durations[s2])
            entries.append(ManifestEntry(s1=s1, s2=s2, snr_db=snr, split=split, dur_s=dur))
    manifest = Manifest(entries=entries, seed=seed)
    manifest.validate(snr_range=snr_range)
    return manifest


def load_entry_mixture(
    entry: ManifestEntry, target_sr: int = DEFAULT_SAMPLE_RATE
) -> MixtureSample:
    """Deterministically synthesize the mixture a manifest entry describes."""
    s1 = load_wav(entry.s1, target_sr)
    s2 = load_wav(entry.s2, target_sr)
    ids = (Path(entry.s1).stem, Path(entry.s2).stem)
    return synth_mixture([s1, s2], entry.snr_db, ids=ids)


def render_manifest(
    manifest: Manifest, out_dir: str | Path, target_sr: int = DEFAULT_SAMPLE_RATE
) -> list[Path]:
    """Write mixture and post-scaling source WAVs for every manifest entry."""
    out_dir = Path(out_dir)
    written = []
    index: dict[str, int] = {s: 0 for s in SPLITS}
    for e in manifest.entries:
        k = index[e.split]
        index[e.split] += 1
        mix = load_entry_mixture(e, target_sr)
        base = out_dir / e.split / f"utt{k:05d}"
        save_wav(base.with_suffix(".mix.wav"), mix.mixture)
        for i, src in enumerate(mix.sources):
            save_wav(base.with_suffix(f".s{i + 1}.wav"), src)
        written.append(base)
    return written


def make_synthetic_corpus(
    root: str | Path,
    num_speakers: int = 6,
    utts_per_speaker: int = 4,
    dur_s: float = 2.0,
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE,
    seed: int = 0,
) -> Path:
    """Generate a toy corpus of synthetic "speakers" for desk-scale runs.

    Each speaker owns a distinct frequency band; utterances are band-limited
    noise plus a tone at the band center, written as float32 WAVs under
    ``root/spkNN/uttNN.wav``.
    """
    if num_speakers < 2:
        raise ValueError("need at least 2 speakers")
    root = Path(root)
    nyquist = sample_rate_hz / 2
    band_lo, band_hi = 200.0, min(3800.0, nyquist * 0.95)
    width = (band_hi - band_lo) / num_speakers
    n = int(round(dur_s * sample_rate_hz))
    rng = np.random.default_rng(seed)
    for k in range(num_speakers):
        f_lo = band_lo + k * width
        f_hi = f_lo + 0.8 * width
        tone_hz = 0.5 * (f_lo + f_hi)
        for u in range(utts_per_speaker):
            noise = _bandlimited_noise(rng, n, sample_rate_hz, f_lo, f_hi)
            t = np.arange(n) / sample_rate_hz
            tone = np.sin(2 * np.pi * tone_hz * t + rng.uniform(0, 2 * np.pi))
            x = noise + 0.5 * tone
            x *= 0.1 / np.sqrt(np.mean(np.square(x)))
            save_wav(root / f"spk{k:02d}" / f"utt{u:02d}.wav", Waveform(x, sample_rate_hz))
    return root


def _bandlimited_noise(
    rng: np.random.Generator, n: int, sr: int, f_lo: float, f_hi: float
) -> np.ndarray:
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spec[(freqs < f_lo) | (freqs > f_hi)] = 0.0
    x = np.fft.irfft(spec, n)
    rms = np.sqrt(np.mean(np.square(x)))
    return x / rms if rms > 0 else x

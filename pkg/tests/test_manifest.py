"""Corpus listing, manifest construction, persistence, and rendering tests."""

import json

import numpy as np
import pytest

from tcnsep.audio import load_wav
from tcnsep.manifest import (
    Manifest,
    ManifestEntry,
    build_manifest,
    list_corpus,
    load_entry_mixture,
    make_synthetic_corpus,
    render_manifest,
)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    make_synthetic_corpus(root, num_speakers=6, utts_per_speaker=3, dur_s=0.5, seed=0)
    return root


class TestSyntheticCorpus:
    def test_layout(self, corpus):
        speakers = list_corpus(corpus)
        assert len(speakers) == 6
        for name, utts in speakers.items():
            assert len(utts) == 3
            for path in utts:
                w = load_wav(path)
                assert w.sample_rate_hz == 8000
                assert w.num_samples == 4000

    def test_deterministic(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        make_synthetic_corpus(a, num_speakers=2, utts_per_speaker=1, dur_s=0.25, seed=7)
        make_synthetic_corpus(b, num_speakers=2, utts_per_speaker=1, dur_s=0.25, seed=7)
        wa = load_wav(next(iter(list_corpus(a).values()))[0])
        wb = load_wav(next(iter(list_corpus(b).values()))[0])
        assert np.array_equal(wa.samples, wb.samples)


class TestBuildManifest:
    def test_splits_and_ranges(self, corpus):
        m = build_manifest(corpus, pair_count=20, snr_range=(0.0, 5.0), seed=1)
        assert len(m.entries) == 20
        by_split = {s: m.split(s) for s in ("train", "valid", "test")}
        assert len(by_split["valid"]) == 2
        assert len(by_split["test"]) == 2
        assert len(by_split["train"]) == 16
        for e in m.entries:
            assert 0.0 <= e.snr_db <= 5.0
            assert e.speakers()[0] != e.speakers()[1]
            assert e.dur_s > 0

    def test_test_speakers_unseen_in_training(self, corpus):
        m = build_manifest(corpus, pair_count=30, snr_range=(0.0, 5.0), seed=2)
        train_speakers = m.speakers("train") | m.speakers("valid")
        test_speakers = m.speakers("test")
        assert test_speakers
        assert not (train_speakers & test_speakers)

    def test_deterministic_given_seed(self, corpus):
        m1 = build_manifest(corpus, pair_count=10, snr_range=(0.0, 5.0), seed=3)
        m2 = build_manifest(corpus, pair_count=10, snr_range=(0.0, 5.0), seed=3)
        assert m1.entries == m2.entries
        m3 = build_manifest(corpus, pair_count=10, snr_range=(0.0, 5.0), seed=4)
        assert m1.entries != m3.entries

    def test_few_speakers_folds_test_into_train(self, tmp_path, caplog):
        root = tmp_path / "tiny"
        make_synthetic_corpus(root, num_speakers=2, utts_per_speaker=2, dur_s=0.25, seed=0)
        with caplog.at_level("WARNING"):
            m = build_manifest(root, pair_count=10, snr_range=(0.0, 5.0), seed=0)
        assert len(m.split("train")) == 10 - len(m.split("valid"))
        assert not m.split("test")


class TestPersistence:
    def test_jsonl_round_trip(self, corpus, tmp_path):
        m = build_manifest(corpus, pair_count=8, snr_range=(0.0, 5.0), seed=5)
        path = tmp_path / "manifest.jsonl"
        m.save(path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 8
        # external contract: fixed key set and order per line
        assert list(json.loads(lines[0]).keys()) == ["s1", "s2", "snr_db", "split", "dur_s"]
        back = Manifest.load(path)
        assert back.entries == m.entries

    def test_load_rejects_missing_files(self, tmp_path):
        path = tmp_path / "m.jsonl"
        entry = {"s1": "/nope/a.wav", "s2": "/nope/b.wav", "snr_db": 1.0, "split": "train", "dur_s": 1.0}
        path.write_text(json.dumps(entry) + "\n")
        with pytest.raises(FileNotFoundError):
            Manifest.load(path, check_files=True)
        m = Manifest.load(path, check_files=False)
        assert len(m.entries) == 1

    def test_entry_validation(self):
        with pytest.raises(ValueError):
            ManifestEntry(s1="a.wav", s2="b.wav", snr_db=0.0, split="dev", dur_s=1.0)


class TestRendering:
    def test_entry_mixture_is_deterministic(self, corpus):
        m = build_manifest(corpus, pair_count=4, snr_range=(0.0, 5.0), seed=6)
        a = load_entry_mixture(m.entries[0])
        b = load_entry_mixture(m.entries[0])
        assert np.array_equal(a.mixture.samples, b.mixture.samples)
        assert a.snr_db == m.entries[0].snr_db

    def test_render_writes_audio(self, corpus, tmp_path):
        m = build_manifest(corpus, pair_count=4, snr_range=(0.0, 5.0), seed=6)
        out = tmp_path / "audio"
        written = render_manifest(m, out)
        assert len(written) == 4
        sample = load_entry_mixture(m.entries[0])
        first = m.entries[0]
        base = out / first.split / "utt00000"
        mix = load_wav(base.with_suffix(".mix.wav"))
        # float32 WAV quantization only
        assert np.max(np.abs(mix.samples - sample.mixture.samples)) < 1e-6

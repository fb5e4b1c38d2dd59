import json
from pathlib import Path

import numpy as np
import pytest

from boweldet.audio import low_pass
from boweldet.spectrogram import SpectrogramConfig, mel_spectrogram, normalize_segments
from boweldet.store import open_store, write_store
from boweldet.synth import SynthSpec, synthesize_recording


def build_store_dir(out_dir: Path, n_recordings: int, seed: int = 7,
                    snr_db=(15.0, 20.0)) -> Path:
    """Synthesize a corpus and preprocess it straight into a store directory."""
    spec = SynthSpec(n_recordings=n_recordings, seed=seed, snr_db=snr_db)
    scfg = SpectrogramConfig()
    records = []
    for i in range(n_recordings):
        signal, events = synthesize_recording(spec, i)
        filtered = low_pass(signal, 2000.0)
        s = normalize_segments(mel_spectrogram(filtered, scfg), scfg.segment_norm_s)
        records.append((f"synth_{i:04d}", s.values, signal.duration_s, events))
    write_store(out_dir, records, scfg.time_bins_per_s, scfg.config_hash(),
                config={"n_mels": scfg.n_mels})
    return out_dir


@pytest.fixture(scope="session")
def small_store(tmp_path_factory):
    """16 preprocessed synthetic recordings, shared across the session."""
    store_dir = tmp_path_factory.mktemp("store16")
    build_store_dir(store_dir, n_recordings=16, seed=11)
    return open_store(store_dir)


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    """Raw WAV + annotation corpus (8 recordings) for CLI-level tests."""
    from boweldet.synth import generate

    corpus = tmp_path_factory.mktemp("corpus8")
    generate(SynthSpec(n_recordings=8, seed=3), corpus)
    return corpus


def write_run_config(path: Path, **sections) -> Path:
    path.write_text(json.dumps(sections))
    return path

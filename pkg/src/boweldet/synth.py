"""Synthetic labeled recordings: band-limited noise bursts over a pink
background, written in the same WAV + annotation formats the real corpus
uses, so the whole pipeline can run end to end without it.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from boweldet.audio import PcmSignal, write_wav
from boweldet.dataset import EventKind, SoundEvent, format_annotations
from boweldet.errors import PackingError


@dataclass(frozen=True)
class SynthSpec:
    n_recordings: int = 200
    duration_s: float = 2.0
    sample_rate: int = 44100
    bursts_per_recording: tuple = (1, 4)     # inclusive range
    burst_duration_s: tuple = (0.01, 0.04)
    burst_band_hz: tuple = (60.0, 2000.0)
    snr_db: tuple = (15.0, 20.0)
    background_rms: float = 0.02
    min_gap_s: float = 0.03
    edge_margin_s: float = 0.05
    seed: int = 7


def _bandpass_fft(x: np.ndarray, sample_rate: int, lo: float, hi: float) -> np.ndarray:
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x), d=1.0 / sample_rate)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    return np.fft.irfft(spec, n=len(x))


def _pink_noise(n: int, rng) -> np.ndarray:
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n)
    shaping = np.ones_like(freqs)
    shaping[1:] = 1.0 / np.sqrt(freqs[1:])
    shaping[0] = 0.0
    return np.fft.irfft(spec * shaping, n=n)


def _place_bursts(rng, n_bursts, spec: SynthSpec) -> list[tuple[float, float]]:
    placed: list[tuple[float, float]] = []
    lo_t = spec.edge_margin_s
    hi_t = spec.duration_s - spec.edge_margin_s
    for _ in range(n_bursts):
        dur = rng.uniform(*spec.burst_duration_s)
        ok = False
        for _attempt in range(200):
            start = rng.uniform(lo_t, hi_t - dur)
            if all(start + dur + spec.min_gap_s <= s or e + spec.min_gap_s <= start
                   for s, e in placed):
                placed.append((start, start + dur))
                ok = True
                break
        if not ok:
            raise PackingError(
                f"could not place {n_bursts} bursts of up to {spec.burst_duration_s[1]}s "
                f"into {spec.duration_s}s"
            )
    return sorted(placed)


def synthesize_recording(spec: SynthSpec, index: int) -> tuple[PcmSignal, list[SoundEvent]]:
    """Deterministically synthesize recording ``index`` of the corpus."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, index]))
    n = int(round(spec.duration_s * spec.sample_rate))
    bg = _pink_noise(n, rng)
    bg *= spec.background_rms / max(np.sqrt(np.mean(bg ** 2)), 1e-12)
    lo_hz, hi_hz = spec.burst_band_hz
    bg_inband_rms = np.sqrt(np.mean(_bandpass_fft(bg, spec.sample_rate, lo_hz, hi_hz) ** 2))

    n_bursts = int(rng.integers(spec.bursts_per_recording[0], spec.bursts_per_recording[1] + 1))
    intervals = _place_bursts(rng, n_bursts, spec)
    x = bg.copy()
    events = []
    for start, end in intervals:
        i0 = int(round(start * spec.sample_rate))
        i1 = int(round(end * spec.sample_rate))
        m = i1 - i0
        burst = _bandpass_fft(rng.standard_normal(m), spec.sample_rate, lo_hz, hi_hz)
        envelope = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(m) / max(m - 1, 1))
        burst *= envelope
        snr = rng.uniform(*spec.snr_db)
        target_rms = bg_inband_rms * 10.0 ** (snr / 20.0)
        burst *= target_rms / max(np.sqrt(np.mean(burst ** 2)), 1e-12)
        x[i0:i1] += burst
        events.append(SoundEvent(start, end, EventKind.single_burst))
    peak = np.abs(x).max()
    if peak > 0.99:
        x *= 0.99 / peak
    return PcmSignal(samples=x, sample_rate=spec.sample_rate), events


def generate(spec: SynthSpec, out_dir: str | Path) -> list[str]:
    """Write the corpus (WAV + annotation file per recording); returns ids."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(spec.n_recordings):
        rec_id = f"synth_{i:04d}"
        signal, events = synthesize_recording(spec, i)
        write_wav(out_dir / f"{rec_id}.wav", signal, bits=24)
        (out_dir / f"{rec_id}.txt").write_text(format_annotations(events))
        ids.append(rec_id)
    return ids

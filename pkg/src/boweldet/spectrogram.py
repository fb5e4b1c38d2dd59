"""Log-mel spectrograms at the detector's native resolution.

The default geometry is 630 time bins per second and 64 mel bins spanning
0-2000 Hz, so a 2 s recording at 44.1 kHz becomes a 1260 x 64 grid. The
STFT uses a Hann-windowed 512-sample frame zero-padded to a longer FFT
(``fft_oversample``) so that the narrow low-frequency mel triangles always
cover at least one FFT bin.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from boweldet.audio import PcmSignal
from boweldet.errors import InvalidConfig, InvalidFrequency, SignalTooShort


def hz_to_mel(f: float) -> float:
    """Map frequency in Hz to mels: 2595 * log10(1 + f/700)."""
    if np.any(np.asarray(f) < 0):
        raise InvalidFrequency(f"negative frequency: {f}")
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class SpectrogramConfig:
    n_mels: int = 64
    time_bins_per_s: int = 630
    fft_size: int = 512
    f_min: float = 0.0
    f_max: float = 2000.0
    segment_norm_s: float = 2.0
    fft_oversample: int = 4
    log_floor: float = 1e-10

    def validate(self, sample_rate: int) -> None:
        if self.n_mels <= 0 or self.time_bins_per_s <= 0 or self.fft_size <= 0:
            raise InvalidConfig("n_mels, time_bins_per_s and fft_size must be positive")
        if sample_rate % self.time_bins_per_s != 0:
            raise InvalidConfig(
                f"sample rate {sample_rate} not divisible by {self.time_bins_per_s} bins/s"
            )
        if not (0 <= self.f_min < self.f_max <= sample_rate / 2):
            raise InvalidConfig(
                f"need 0 <= f_min < f_max <= nyquist, got [{self.f_min}, {self.f_max}]"
            )
        if self.segment_norm_s <= 0:
            raise InvalidConfig("segment_norm_s must be positive")
        if self.fft_oversample < 1:
            raise InvalidConfig("fft_oversample must be >= 1")

    def hop_samples(self, sample_rate: int) -> int:
        return sample_rate // self.time_bins_per_s

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class Spectrogram:
    """2-D grid of log-mel energies, rows = time bins, cols = mel bins."""

    values: np.ndarray
    time_bins_per_s: int

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]

    @property
    def n_time_bins(self) -> int:
        return self.values.shape[0]


def hann_window(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def mel_filterbank(cfg: SpectrogramConfig, sample_rate: int) -> np.ndarray:
    """Triangular unit-peak mel filters, shape (n_mels, n_fft//2 + 1).

    Triangle breakpoints are mel-spaced across [f_min, f_max]; between two
    adjacent filter centers the weights of the pair sum to exactly 1.
    """
    n_fft = cfg.fft_size * cfg.fft_oversample
    freqs = np.arange(n_fft // 2 + 1, dtype=np.float64) * sample_rate / n_fft
    mel_pts = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((cfg.n_mels, len(freqs)), dtype=np.float64)
    for k in range(cfg.n_mels):
        lo, center, hi = hz_pts[k], hz_pts[k + 1], hz_pts[k + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        fb[k] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return fb


def filterbank_centers_hz(cfg: SpectrogramConfig) -> np.ndarray:
    mel_pts = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2)
    return mel_to_hz(mel_pts[1:-1])


def mel_spectrogram(signal: PcmSignal, cfg: SpectrogramConfig | None = None) -> Spectrogram:
    """Convert a PCM signal to a log-mel spectrogram (not yet normalized).

    Frame k covers samples [k*hop, k*hop + fft_size), reflection-padded at
    the right edge, Hann-windowed; the power spectrum is projected through
    the mel filterbank and floored-log-compressed.
    """
    cfg = cfg or SpectrogramConfig()
    cfg.validate(signal.sample_rate)
    x = signal.samples
    if len(x) < cfg.fft_size:
        raise SignalTooShort(f"{len(x)} samples < fft_size {cfg.fft_size}")
    hop = cfg.hop_samples(signal.sample_rate)
    n_frames = len(x) // hop
    pad = (n_frames - 1) * hop + cfg.fft_size - len(x)
    if pad > 0:
        x = np.pad(x, (0, pad), mode="reflect")
    starts = np.arange(n_frames) * hop
    frames = x[starts[:, None] + np.arange(cfg.fft_size)[None, :]]
    frames = frames * hann_window(cfg.fft_size)
    n_fft = cfg.fft_size * cfg.fft_oversample
    spectrum = np.fft.rfft(frames, n=n_fft, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    fb = mel_filterbank(cfg, signal.sample_rate)
    energies = power @ fb.T
    values = np.log10(cfg.log_floor + energies)
    return Spectrogram(values=values.astype(np.float32), time_bins_per_s=cfg.time_bins_per_s)


def normalize_segments(spec: Spectrogram, segment_s: float = 2.0) -> Spectrogram:
    """Min-max rescale every consecutive ``segment_s`` block of rows to [0, 1].

    The last block may be shorter; a constant block maps to all zeros.
    """
    if segment_s <= 0:
        raise InvalidConfig("segment_s must be positive")
    rows_per_block = max(1, int(round(segment_s * spec.time_bins_per_s)))
    out = spec.values.copy()
    for lo in range(0, out.shape[0], rows_per_block):
        block = out[lo:lo + rows_per_block]
        bmin = block.min()
        bmax = block.max()
        if bmax > bmin:
            block -= bmin
            block /= bmax - bmin
        else:
            block[:] = 0.0
    return Spectrogram(values=out, time_bins_per_s=spec.time_bins_per_s)

"""WAV decoding/encoding and the anti-noise low-pass filter.

Decoding targets the corpus format: RIFF/WAVE containers with 16- or
24-bit integer PCM, one or two channels. Everything is returned as a
mono float64 signal in [-1, 1].
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from boweldet.errors import DecodeError, InvalidCutoff, UnsupportedFormat

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class PcmSignal:
    """Mono audio samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


def _find_chunks(data: bytes):
    """Yield (chunk_id, payload) for every top-level RIFF chunk."""
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        payload = data[pos + 8:pos + 8 + size]
        if len(payload) < size:
            raise DecodeError(f"chunk {cid!r} truncated: {len(payload)} of {size} bytes")
        yield cid, payload
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def decode_wav(data: bytes) -> PcmSignal:
    """Decode a RIFF/WAVE byte string into a mono PcmSignal.

    Multi-channel input is averaged per frame; integer samples are scaled
    by 1 / 2^(bits-1).
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise DecodeError("not a RIFF/WAVE container")
    fmt = None
    pcm = None
    for cid, payload in _find_chunks(data):
        if cid == b"fmt ":
            fmt = payload
        elif cid == b"data":
            pcm = payload
    if fmt is None or len(fmt) < 16:
        raise DecodeError("missing or short fmt chunk")
    if pcm is None:
        raise DecodeError("missing data chunk")
    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 40:
        (tag,) = struct.unpack_from("<H", fmt, 24)  # first two GUID bytes carry the subformat
    if tag != WAVE_FORMAT_PCM:
        raise UnsupportedFormat(f"only integer PCM is supported, got format tag {tag}")
    if bits not in (16, 24):
        raise UnsupportedFormat(f"only 16- and 24-bit samples are supported, got {bits}")
    if channels not in (1, 2):
        raise UnsupportedFormat(f"only mono or stereo input is supported, got {channels} channels")
    if rate <= 0:
        raise DecodeError("non-positive sample rate")
    bytes_per_sample = bits // 8
    frame = bytes_per_sample * channels
    if block_align and block_align != frame:
        raise DecodeError(f"block align {block_align} inconsistent with {bits}-bit x{channels}")
    n_frames = len(pcm) // frame
    pcm = pcm[:n_frames * frame]

    raw = np.frombuffer(pcm, dtype=np.uint8).reshape(n_frames * channels, bytes_per_sample)
    if bits == 16:
        ints = raw.view("<i2")[:, 0].astype(np.int32)
    else:
        ints = (
            raw[:, 0].astype(np.int32)
            | (raw[:, 1].astype(np.int32) << 8)
            | (raw[:, 2].astype(np.int32) << 16)
        )
        ints -= (ints & 0x800000) << 1  # sign extension
    scaled = ints.astype(np.float64) / float(2 ** (bits - 1))
    if channels == 2:
        scaled = scaled.reshape(n_frames, 2).mean(axis=1)
    return PcmSignal(samples=scaled, sample_rate=int(rate))


def encode_wav(signal: PcmSignal, bits: int = 24) -> bytes:
    """Encode a mono signal as integer PCM. Inverse of decode for samples
    that are exact multiples of the quantization step."""
    if bits not in (16, 24):
        raise UnsupportedFormat(f"only 16- and 24-bit encoding is supported, got {bits}")
    full = float(2 ** (bits - 1))
    ints = np.clip(np.round(signal.samples * full), -full, full - 1).astype(np.int64)
    if bits == 16:
        payload = ints.astype("<i2").tobytes()
    else:
        u = (ints & 0xFFFFFF).astype(np.uint32)
        b = np.empty((len(u), 3), dtype=np.uint8)
        b[:, 0] = u & 0xFF
        b[:, 1] = (u >> 8) & 0xFF
        b[:, 2] = (u >> 16) & 0xFF
        payload = b.tobytes()
    frame = bits // 8
    fmt = struct.pack(
        "<HHIIHH", WAVE_FORMAT_PCM, 1, signal.sample_rate,
        signal.sample_rate * frame, frame, bits,
    )
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\0"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def read_wav(path: str | Path) -> PcmSignal:
    return decode_wav(Path(path).read_bytes())


def write_wav(path: str | Path, signal: PcmSignal, bits: int = 24) -> None:
    Path(path).write_bytes(encode_wav(signal, bits=bits))


def lowpass_kernel(cutoff_hz: float, sample_rate: int, taps: int = 101) -> np.ndarray:
    """Windowed-sinc (Hamming) low-pass FIR kernel, unit DC gain."""
    if taps % 2 == 0:
        raise InvalidCutoff("taps must be odd for a zero-phase filter")
    m = np.arange(taps) - (taps - 1) / 2
    h = 2.0 * cutoff_hz / sample_rate * np.sinc(2.0 * cutoff_hz / sample_rate * m)
    h *= np.hamming(taps)
    return h / h.sum()


def low_pass(signal: PcmSignal, cutoff_hz: float, taps: int = 101) -> PcmSignal:
    """Zero-phase FIR low-pass; output length equals input length.

    The symmetric kernel is applied centered, with reflection padding at
    both ends, so there is no group delay.
    """
    nyquist = signal.sample_rate / 2.0
    if not (0.0 < cutoff_hz < nyquist):
        raise InvalidCutoff(f"cutoff {cutoff_hz} Hz outside (0, {nyquist})")
    h = lowpass_kernel(cutoff_hz, signal.sample_rate, taps=taps)
    half = (taps - 1) // 2
    x = signal.samples
    if len(x) == 0:
        return PcmSignal(samples=x.copy(), sample_rate=signal.sample_rate)
    pad = min(half, len(x) - 1)
    xp = np.pad(x, pad, mode="reflect")
    if pad < half:  # very short signal: keep padding with edge values
        xp = np.pad(xp, half - pad, mode="edge")
    y = np.convolve(xp, h, mode="valid")
    return PcmSignal(samples=y, sample_rate=signal.sample_rate)

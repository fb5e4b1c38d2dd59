"""Sliding-window prediction, vote aggregation and interval-set algebra.

A recording's spectrogram is scanned with overlapping windows; windows the
classifier accepts (probability above the threshold) are refined by the
regressor into time intervals. Per-bin confidence votes are accumulated
and bins reaching ``vote_fraction * overlap`` become positive; runs of
positive bins form the reported intervals.
"""

import math
from dataclasses import dataclass

import numpy as np

from boweldet import kernels
from boweldet.errors import IncompatibleModel, InvalidConfig, WindowTooLarge
from boweldet.nn import Network

Interval = tuple[float, float]


@dataclass(frozen=True)
class PredictConfig:
    threshold: float = 0.9
    vote_fraction: float = 0.1
    overlap: int = 10
    window_s: float = 0.2

    def validate(self) -> None:
        if not (0.0 < self.threshold < 1.0):
            raise InvalidConfig(f"threshold must be in (0,1), got {self.threshold}")
        if not (0.0 < self.vote_fraction <= 1.0):
            raise InvalidConfig(f"vote_fraction must be in (0,1], got {self.vote_fraction}")
        if self.overlap < 1:
            raise InvalidConfig(f"overlap must be >= 1, got {self.overlap}")
        if self.window_s <= 0:
            raise InvalidConfig("window_s must be positive")


@dataclass(frozen=True)
class Detection:
    start_s: float
    end_s: float
    confidence: float


def slide_windows(n_time_bins: int, window_s: float, overlap: int,
                  time_bins_per_s: int) -> np.ndarray:
    """Window start bins: stride = round-half-up(window_bins / overlap)."""
    window_bins = int(round(window_s * time_bins_per_s))
    if window_bins > n_time_bins:
        raise WindowTooLarge(f"window {window_bins} bins > recording {n_time_bins} bins")
    if overlap < 1:
        raise InvalidConfig(f"overlap must be >= 1, got {overlap}")
    stride = max(1, int(math.floor(window_bins / overlap + 0.5)))
    return np.arange(0, n_time_bins - window_bins + 1, stride, dtype=np.int64)


def refine_interval(window_start_s: float, window_s: float, offset: float,
                    scale: float, duration_s: float | None = None) -> Interval:
    """Turn regressor outputs into an absolute interval, clipped to the
    recording when its duration is given."""
    center = window_start_s + 0.5 * window_s + offset * window_s
    half = 0.5 * scale * window_s
    lo, hi = center - half, center + half
    if duration_s is not None:
        lo, hi = max(lo, 0.0), min(hi, duration_s)
    return (lo, hi)


def window_probabilities(classifier: Network, spec_values: np.ndarray,
                         starts: np.ndarray, window_bins: int,
                         batch_size: int = 512) -> np.ndarray:
    """Classifier probability for each window start, batched eval forward."""
    probs = np.empty(len(starts), dtype=np.float64)
    for i in range(0, len(starts), batch_size):
        chunk = starts[i:i + batch_size]
        x = spec_values[chunk[:, None] + np.arange(window_bins)[None, :]]
        x = np.ascontiguousarray(x, dtype=np.float32)[..., None]
        probs[i:i + batch_size] = classifier.forward(x, train=False).ravel()
    return probs


def regress_windows(regressor: Network, spec_values: np.ndarray, starts: np.ndarray,
                    window_bins: int, batch_size: int = 512) -> np.ndarray:
    out = np.empty((len(starts), 2), dtype=np.float64)
    for i in range(0, len(starts), batch_size):
        chunk = starts[i:i + batch_size]
        x = spec_values[chunk[:, None] + np.arange(window_bins)[None, :]]
        x = np.ascontiguousarray(x, dtype=np.float32)[..., None]
        out[i:i + batch_size] = regressor.forward(x, train=False)
    return out


def check_model_compat(header: dict, store_hash: str) -> None:
    model_hash = header.get("spectrogram_config_hash", "")
    if model_hash and store_hash and model_hash != store_hash:
        raise IncompatibleModel(
            f"model spectrogram hash {model_hash} != store hash {store_hash}"
        )


def detect(classifier: Network, regressor: Network, spec_values: np.ndarray,
           time_bins_per_s: int, cfg: PredictConfig,
           duration_s: float | None = None) -> list[Detection]:
    """Run both stages over one recording's (rows x mels) spectrogram."""
    cfg.validate()
    window_bins = int(round(cfg.window_s * time_bins_per_s))
    starts = slide_windows(spec_values.shape[0], cfg.window_s, cfg.overlap, time_bins_per_s)
    probs = window_probabilities(classifier, spec_values, starts, window_bins)
    hits = np.nonzero(probs > cfg.threshold)[0]
    if len(hits) == 0:
        return []
    reg = regress_windows(regressor, spec_values, starts[hits], window_bins)
    detections = []
    for j, widx in enumerate(hits):
        start_s = starts[widx] / time_bins_per_s
        lo, hi = refine_interval(start_s, cfg.window_s, reg[j, 0], reg[j, 1], duration_s)
        if hi > lo:
            detections.append(Detection(lo, hi, float(probs[widx])))
    return detections


def aggregate(detections: list[Detection], cfg: PredictConfig, n_time_bins: int,
              time_bins_per_s: int) -> list[Interval]:
    """Confidence-weighted voting: bin positive iff the summed confidence
    of detections covering its center reaches vote_fraction * overlap."""
    cfg.validate()
    if not detections:
        return []
    starts = np.array([d.start_s for d in detections], dtype=np.float64)
    ends = np.array([d.end_s for d in detections], dtype=np.float64)
    confs = np.array([d.confidence for d in detections], dtype=np.float64)
    acc = kernels.vote_accumulate(starts, ends, confs, n_time_bins, float(time_bins_per_s))
    mask = acc >= cfg.vote_fraction * cfg.overlap
    return mask_to_intervals(mask, time_bins_per_s)


def mask_to_intervals(mask: np.ndarray, time_bins_per_s: int) -> list[Interval]:
    """Merge runs of positive bins into [first/R, (last+1)/R) intervals."""
    idx = np.nonzero(mask)[0]
    if len(idx) == 0:
        return []
    breaks = np.nonzero(np.diff(idx) > 1)[0]
    run_starts = np.concatenate([[0], breaks + 1])
    run_ends = np.concatenate([breaks, [len(idx) - 1]])
    r = float(time_bins_per_s)
    return [(idx[a] / r, (idx[b] + 1) / r) for a, b in zip(run_starts, run_ends)]


def canonical_intervals(intervals) -> list[Interval]:
    """Sort and merge touching/overlapping intervals; drop empty ones."""
    ivs = sorted((float(a), float(b)) for a, b in intervals if b > a)
    out: list[Interval] = []
    for a, b in ivs:
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def write_detections_csv(path, per_recording: dict, config_hash: str = "") -> None:
    """per_recording: id -> list of Detection."""
    lines = []
    if config_hash:
        lines.append(f"# config_hash={config_hash}")
    lines.append("recording_id,start_s,end_s,confidence")
    for rec_id in sorted(per_recording):
        for d in per_recording[rec_id]:
            lines.append(f"{rec_id},{d.start_s:.6f},{d.end_s:.6f},{d.confidence:.6f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_intervals_csv(path, per_recording: dict, config_hash: str = "") -> None:
    """per_recording: id -> list of (start_s, end_s)."""
    lines = []
    if config_hash:
        lines.append(f"# config_hash={config_hash}")
    lines.append("recording_id,start_s,end_s")
    for rec_id in sorted(per_recording):
        for a, b in per_recording[rec_id]:
            lines.append(f"{rec_id},{a:.6f},{b:.6f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_intervals_csv(path) -> tuple[dict, str | None]:
    """Returns (id -> interval list, embedded config hash if present)."""
    per_recording: dict = {}
    config_hash = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "config_hash=" in line:
                    config_hash = line.split("config_hash=", 1)[1].strip()
                continue
            if line.startswith("recording_id"):
                continue
            parts = line.split(",")
            rec_id = parts[0]
            per_recording.setdefault(rec_id, []).append((float(parts[1]), float(parts[2])))
    return per_recording, config_hash


def meta_combine(mode: str, a, b) -> list[Interval]:
    """Combine two interval sets: 'intersect' keeps time covered by both,
    'sum' keeps time covered by either."""
    a = canonical_intervals(a)
    b = canonical_intervals(b)
    if mode == "sum":
        return canonical_intervals(a + b)
    if mode != "intersect":
        raise InvalidConfig(f"meta mode must be 'intersect' or 'sum', got {mode!r}")
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if hi > lo:
            out.append((lo, hi))
        if a[i][1] <= b[j][1]:
            i += 1
        else:
            j += 1
    return out

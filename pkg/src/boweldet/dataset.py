"""Annotations, corpus splitting and training-window generation."""

import json
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from boweldet.errors import (
    EmptyClassError,
    InvalidInterval,
    ParseError,
    StratificationWarning,
)


class EventKind(str, Enum):
    single_burst = "single_burst"
    distinct_burst = "distinct_burst"
    multiple_burst = "multiple_burst"
    continuous = "continuous"
    other = "other"


_KIND_TOKENS = {
    "sb": EventKind.single_burst,
    "single_burst": EventKind.single_burst,
    "db": EventKind.distinct_burst,
    "distinct_burst": EventKind.distinct_burst,
    "mb": EventKind.multiple_burst,
    "multiple_burst": EventKind.multiple_burst,
    "cr": EventKind.continuous,
    "continuous": EventKind.continuous,
}


@dataclass(frozen=True)
class SoundEvent:
    start_s: float
    end_s: float
    kind: EventKind = EventKind.single_burst

    def __post_init__(self):
        if not (0.0 <= self.start_s < self.end_s):
            raise InvalidInterval(f"need 0 <= start < end, got [{self.start_s}, {self.end_s}]")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    @property
    def center_s(self) -> float:
        return 0.5 * (self.start_s + self.end_s)


def event_to_dict(e: SoundEvent) -> dict:
    return {"start_s": e.start_s, "end_s": e.end_s, "kind": e.kind.value}


def event_from_dict(d: dict) -> SoundEvent:
    return SoundEvent(d["start_s"], d["end_s"], EventKind(d["kind"]))


@dataclass
class AnnotatedRecording:
    id: str
    audio_path: str
    events: list
    duration_s: float


def parse_annotations(text: str) -> list[SoundEvent]:
    """Parse "start_s<sep>end_s<sep>kind" lines; sep is comma or whitespace.

    Events come back sorted by start time; unknown kind tokens map to
    ``other``. Blank lines are skipped.
    """
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [p for p in line.replace(",", " ").split() if p]
        if len(parts) != 3:
            raise ParseError(f"line {lineno}: expected 'start end kind', got {raw!r}")
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric interval in {raw!r}") from None
        if not (0.0 <= start < end):
            raise InvalidInterval(f"line {lineno}: start {start} >= end {end}")
        kind = _KIND_TOKENS.get(parts[2].lower(), EventKind.other)
        events.append(SoundEvent(start, end, kind))
    events.sort(key=lambda e: (e.start_s, e.end_s))
    return events


def format_annotations(events: list[SoundEvent]) -> str:
    inv = {
        EventKind.single_burst: "sb",
        EventKind.distinct_burst: "db",
        EventKind.multiple_burst: "mb",
        EventKind.continuous: "cr",
        EventKind.other: "other",
    }
    return "".join(f"{e.start_s:.6f},{e.end_s:.6f},{inv[e.kind]}\n" for e in events)


DEFAULT_ALLOWED_KINDS = frozenset({EventKind.single_burst, EventKind.distinct_burst})


def filter_events(events, max_duration_s: float = 0.2,
                  allowed_kinds=DEFAULT_ALLOWED_KINDS) -> list[SoundEvent]:
    """Keep events of an allowed kind no longer than max_duration_s."""
    if max_duration_s <= 0:
        raise InvalidInterval("max_duration_s must be positive")
    allowed = {EventKind(k) for k in allowed_kinds}
    return [e for e in events if e.kind in allowed and e.duration_s <= max_duration_s]


@dataclass
class DatasetSplit:
    train: list
    valid: list
    test: list
    seed: int

    def part(self, name: str) -> list:
        return {"train": self.train, "valid": self.valid, "test": self.test}[name]

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "train": self.train, "valid": self.valid, "test": self.test},
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        d = json.loads(text)
        return cls(train=d["train"], valid=d["valid"], test=d["test"], seed=d["seed"])


_STRATUM_EDGES = (0, 1, 4, 8)  # event-count bins: 0, 1-3, 4-7, 8+


def _stratum(n_events: int) -> int:
    for i, edge in enumerate(reversed(_STRATUM_EDGES)):
        if n_events >= edge:
            return len(_STRATUM_EDGES) - 1 - i
    return 0


def split_dataset(recordings: list[AnnotatedRecording], ratios=(0.7, 0.2, 0.1),
                  seed: int = 42) -> DatasetSplit:
    """Stratified (by event-count bin) deterministic split.

    Uses cumulative-quota allocation so each part's global size stays
    within one recording of its exact proportion.
    """
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise InvalidInterval(f"ratios must be 3 values summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    strata: dict[int, list[str]] = {}
    for rec in recordings:
        strata.setdefault(_stratum(len(rec.events)), []).append(rec.id)
    occupied = [strata[k] for k in sorted(strata)]
    if len(recordings) < 3 * len(occupied):
        warnings.warn(
            f"{len(recordings)} recordings across {len(occupied)} strata; "
            "falling back to a plain shuffle",
            StratificationWarning,
        )
        occupied = [[rec.id for rec in recordings]]
    parts: list[list[str]] = [[], [], []]
    assigned = [0, 0, 0]
    done = 0
    for ids in occupied:
        ids = sorted(ids)
        rng.shuffle(ids)
        done += len(ids)
        # how many each part should hold once this stratum is placed
        targets = [int(round(r * done)) for r in ratios]
        while sum(targets) > done:
            targets[int(np.argmax(targets))] -= 1
        while sum(targets) < done:
            targets[int(np.argmin(targets))] += 1
        take = [max(0, t - a) for t, a in zip(targets, assigned)]
        while sum(take) > len(ids):
            take[int(np.argmax(take))] -= 1
        while sum(take) < len(ids):
            take[int(np.argmax(targets))] += 1
        pos = 0
        for part_i in range(3):
            parts[part_i].extend(ids[pos:pos + take[part_i]])
            assigned[part_i] += take[part_i]
            pos += take[part_i]
    return DatasetSplit(train=sorted(parts[0]), valid=sorted(parts[1]),
                        test=sorted(parts[2]), seed=seed)


@dataclass(frozen=True)
class WindowLabel:
    positive: bool
    offset: float | None = None  # event center relative to window center, in windows
    scale: float | None = None   # event duration as a fraction of the window


def label_window(window_start_s: float, window_s: float, events) -> WindowLabel:
    """Label one analysis window against (already filtered) events.

    Positive iff some event overlaps the window by at least half of the
    event's own duration. Among qualifying events the one with the largest
    overlap (ties: earliest start) supplies the regression targets.
    """
    w_lo = window_start_s
    w_hi = window_start_s + window_s
    best = None
    best_overlap = -1.0
    for e in events:
        overlap = min(e.end_s, w_hi) - max(e.start_s, w_lo)
        if overlap >= 0.5 * e.duration_s and overlap > 0:
            if overlap > best_overlap or (overlap == best_overlap and e.start_s < best.start_s):
                best = e
                best_overlap = overlap
    if best is None:
        return WindowLabel(positive=False)
    center = window_start_s + 0.5 * window_s
    offset = float(np.clip((best.center_s - center) / window_s, -0.5, 0.5))
    scale = float(min(best.duration_s / window_s, 1.0))
    return WindowLabel(positive=True, offset=offset, scale=scale)


def negative_window_starts(n_time_bins: int, window_bins: int, time_bins_per_s: int,
                           events) -> np.ndarray:
    """All window start bins whose window labels negative, vectorized.

    A window starting at bin b spans [b/R, (b+W)/R) seconds. For an event
    of duration d the window is positive iff the overlap is >= d/2, which
    (for d <= 2W) happens exactly for start times in
    [start + d/2 - W, end - d/2].
    """
    n_starts = n_time_bins - window_bins + 1
    if n_starts <= 0:
        return np.zeros(0, dtype=np.int64)
    r = float(time_bins_per_s)
    window_s = window_bins / r
    positive = np.zeros(n_starts, dtype=bool)
    for e in events:
        d = e.duration_s
        if d > 2.0 * window_s:
            continue  # overlap can never reach d/2
        lo_s = e.start_s + 0.5 * d - window_s
        hi_s = e.end_s - 0.5 * d
        lo = int(np.ceil(lo_s * r - 1e-9))
        hi = int(np.floor(hi_s * r + 1e-9))
        if hi >= 0 and lo < n_starts:
            positive[max(lo, 0):min(hi, n_starts - 1) + 1] = True
    return np.nonzero(~positive)[0].astype(np.int64)


@dataclass
class WindowSample:
    spec_slice: np.ndarray  # (window_bins, n_mels) float32
    label: int              # 1 positive, 0 negative
    target_offset: float | None
    target_scale: float | None
    source: tuple           # (recording id, window start bin)


class WindowSampler:
    """Deterministic infinite stream of labeled training windows.

    Positives are windows jittered by up to +/- jitter_frac of the window
    length around a ground-truth event center; negatives are uniform draws
    from the precomputed negative window starts. Each cycle of p + n draws
    contains exactly p positives, in an rng-shuffled order, so the class
    ratio is exact in the long run.
    """

    def __init__(self, store, ids, window_s: float = 0.2, jitter_frac: float = 0.25,
                 event_filter=None):
        self.store = store
        self.ids = list(ids)
        self.window_s = window_s
        self.window_bins = int(round(window_s * store.time_bins_per_s))
        self.jitter_frac = jitter_frac
        self._positives = []  # (rec_id, event), filtered
        self._negatives = []  # (rec_id, start_bin)
        flt = event_filter if event_filter is not None else (lambda evs: filter_events(evs))
        self._events = {}
        for rec_id in self.ids:
            events = flt(store.events(rec_id))
            self._events[rec_id] = events
            n_bins = store.spectrogram(rec_id).shape[0]
            for e in events:
                self._positives.append((rec_id, e))
            for b in negative_window_starts(n_bins, self.window_bins,
                                            store.time_bins_per_s, events):
                self._negatives.append((rec_id, int(b)))

    def n_positive_events(self) -> int:
        return len(self._positives)

    def _positive(self, rng) -> WindowSample:
        rec_id, event = self._positives[rng.integers(len(self._positives))]
        r = self.store.time_bins_per_s
        n_bins = self.store.spectrogram(rec_id).shape[0]
        jitter = (2.0 * rng.random() - 1.0) * self.jitter_frac * self.window_s
        start_s = event.center_s + jitter - 0.5 * self.window_s
        start = int(round(start_s * r))
        start = min(max(start, 0), n_bins - self.window_bins)
        lab = label_window(start / r, self.window_s, self._events[rec_id])
        if not lab.positive:  # clamping pushed the event out; recenter exactly
            start = int(round(event.center_s * r - 0.5 * self.window_bins))
            start = min(max(start, 0), n_bins - self.window_bins)
            lab = label_window(start / r, self.window_s, self._events[rec_id])
        spec = self.store.spectrogram(rec_id)[start:start + self.window_bins]
        return WindowSample(np.asarray(spec, dtype=np.float32), 1,
                            lab.offset, lab.scale, (rec_id, start))

    def _negative(self, rng) -> WindowSample:
        rec_id, start = self._negatives[rng.integers(len(self._negatives))]
        spec = self.store.spectrogram(rec_id)[start:start + self.window_bins]
        return WindowSample(np.asarray(spec, dtype=np.float32), 0, None, None, (rec_id, start))

    def stream(self, pos_neg_ratio=(1, 3), seed: int = 0):
        p, n = pos_neg_ratio
        if p < 0 or n < 0 or p + n == 0:
            raise EmptyClassError(f"bad ratio {pos_neg_ratio}")
        if p > 0 and not self._positives:
            raise EmptyClassError("no positive events in this split")
        if n > 0 and not self._negatives:
            raise EmptyClassError("no negative windows in this split")
        return self._stream_iter(p, n, seed)

    def _stream_iter(self, p, n, seed):
        rng = np.random.default_rng(seed)
        pattern = np.array([1] * p + [0] * n)
        while True:
            order = rng.permutation(pattern)
            for is_pos in order:
                yield self._positive(rng) if is_pos else self._negative(rng)


def augment_gaussian(sample: WindowSample, std_max: float, rng) -> WindowSample:
    """Add N(0, sigma^2) noise with sigma ~ U(0, std_max), clamp to [0, 1]."""
    if std_max < 0:
        raise InvalidInterval("std_max must be >= 0")
    if std_max == 0:
        return sample
    sigma = rng.random() * std_max
    noisy = sample.spec_slice + rng.standard_normal(sample.spec_slice.shape).astype(np.float32) * np.float32(sigma)
    np.clip(noisy, 0.0, 1.0, out=noisy)
    return WindowSample(noisy, sample.label, sample.target_offset,
                        sample.target_scale, sample.source)

"""On-disk store for merged spectrograms.

One flat little-endian float32 binary (row-major, all recordings
concatenated along the time axis) plus a JSON manifest with the row
offsets, so training and inference can memory-map windows without
re-running the signal pipeline.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from boweldet.dataset import SoundEvent, event_to_dict, event_from_dict
from boweldet.errors import InvalidConfig

BIN_NAME = "spectrograms.f32"
MANIFEST_NAME = "store.json"


@dataclass
class StoreEntry:
    recording_id: str
    row_offset: int
    rows: int
    duration_s: float
    events: list = field(default_factory=list)


class SpectrogramStore:
    """Read side of the merged spectrogram structure."""

    def __init__(self, data: np.ndarray, entries: list[StoreEntry],
                 time_bins_per_s: int, config_hash: str, config: dict | None = None):
        self.data = data
        self.entries = {e.recording_id: e for e in entries}
        self.order = [e.recording_id for e in entries]
        self.time_bins_per_s = time_bins_per_s
        self.config_hash = config_hash
        self.config = config or {}

    @property
    def n_mels(self) -> int:
        return self.data.shape[1]

    def ids(self) -> list[str]:
        return list(self.order)

    def spectrogram(self, recording_id: str) -> np.ndarray:
        e = self.entries[recording_id]
        return self.data[e.row_offset:e.row_offset + e.rows]

    def events(self, recording_id: str) -> list[SoundEvent]:
        return self.entries[recording_id].events

    def duration_s(self, recording_id: str) -> float:
        return self.entries[recording_id].duration_s


def write_store(out_dir: str | Path, records: list[tuple[str, np.ndarray, float, list]],
                time_bins_per_s: int, config_hash: str, config: dict | None = None) -> Path:
    """Write (id, spectrogram rows x mels, duration_s, events) records.

    Records are written in the order given; the caller is responsible for
    a deterministic ordering.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if records:
        n_mels = {r[1].shape[1] for r in records}
        if len(n_mels) != 1:
            raise InvalidConfig(f"inconsistent mel counts across recordings: {sorted(n_mels)}")
    entries = []
    offset = 0
    with open(out_dir / BIN_NAME, "wb") as fh:
        for rec_id, values, duration_s, events in records:
            values = np.ascontiguousarray(values, dtype="<f4")
            fh.write(values.tobytes())
            entries.append({
                "id": rec_id,
                "row_offset": offset,
                "rows": int(values.shape[0]),
                "duration_s": float(duration_s),
                "events": [event_to_dict(e) for e in events],
            })
            offset += values.shape[0]
    manifest = {
        "rows": offset,
        "cols": int(records[0][1].shape[1]) if records else 0,
        "time_bins_per_s": int(time_bins_per_s),
        "config_hash": config_hash,
        "config": config or {},
        "recordings": entries,
    }
    with open(out_dir / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return out_dir


def open_store(store_dir: str | Path, mmap: bool = True) -> SpectrogramStore:
    store_dir = Path(store_dir)
    with open(store_dir / MANIFEST_NAME) as fh:
        manifest = json.load(fh)
    rows, cols = manifest["rows"], manifest["cols"]
    if rows and cols:
        if mmap:
            data = np.memmap(store_dir / BIN_NAME, dtype="<f4", mode="r", shape=(rows, cols))
        else:
            data = np.fromfile(store_dir / BIN_NAME, dtype="<f4").reshape(rows, cols)
    else:
        data = np.zeros((0, max(cols, 1)), dtype=np.float32)
    entries = [
        StoreEntry(
            recording_id=e["id"],
            row_offset=e["row_offset"],
            rows=e["rows"],
            duration_s=e["duration_s"],
            events=[event_from_dict(d) for d in e["events"]],
        )
        for e in manifest["recordings"]
    ]
    return SpectrogramStore(
        data=data,
        entries=entries,
        time_bins_per_s=manifest["time_bins_per_s"],
        config_hash=manifest["config_hash"],
        config=manifest.get("config", {}),
    )

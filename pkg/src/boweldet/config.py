"""Single JSON run configuration shared by every CLI command.

Precedence is flag > file > default. Every derived artifact embeds the
hash of the fully merged configuration, so mixed-provenance inputs can be
detected at evaluation time.
"""

import copy
import hashlib
import json
from dataclasses import asdict
from pathlib import Path

from boweldet.errors import InvalidConfig
from boweldet.inference import PredictConfig
from boweldet.models import ModelConfig, variant_config
from boweldet.spectrogram import SpectrogramConfig
from boweldet.trainer import TrainConfig

DEFAULTS: dict = {
    "spectrogram": asdict(SpectrogramConfig()),
    "train": asdict(TrainConfig()),
    "predict": asdict(PredictConfig()),
    "models": {
        "variant": "baseline",
        "classifier_overrides": {},
        "regressor_overrides": {},
    },
    "data": {
        "audio_dir": "data/audio",
        "store_dir": "out/store",
        "split_path": "out/split.json",
        "out_dir": "out",
        "low_pass_hz": 2000.0,
        "low_pass_taps": 101,
        "split_ratios": [0.7, 0.2, 0.1],
        "split_seed": 42,
    },
    "sweep": {
        "thresholds": [0.9, 0.75, 0.5],
        "overlaps": [1, 5, 10, 25],
        "vote_fractions": [0.05, 0.1, 0.2, 0.4],
        "seeds": [42],
    },
}


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise InvalidConfig(f"unknown config key {path + key!r}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise InvalidConfig(f"config key {path + key!r} must be a section")
            out[key] = _merge(out[key], value, path + key + ".")
        else:
            out[key] = value
    return out


class RunConfig:
    def __init__(self, raw: dict | None = None):
        self.raw = _merge(DEFAULTS, raw or {})

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        with open(path) as fh:
            return cls(json.load(fh))

    def override(self, dotted_key: str, value) -> None:
        section, key = dotted_key.split(".", 1)
        if section not in self.raw or key not in self.raw[section]:
            raise InvalidConfig(f"unknown config key {dotted_key!r}")
        self.raw[section][key] = value

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def spectrogram_config(self) -> SpectrogramConfig:
        return SpectrogramConfig(**self.raw["spectrogram"])

    def train_config(self, **overrides) -> TrainConfig:
        d = dict(self.raw["train"])
        d.update(overrides)
        d["pos_neg_ratio"] = tuple(d["pos_neg_ratio"])
        d["filter_kinds"] = tuple(d["filter_kinds"])
        return TrainConfig(**d)

    def predict_config(self, **overrides) -> PredictConfig:
        d = dict(self.raw["predict"])
        d.update(overrides)
        return PredictConfig(**d)

    def model_config(self, head: str) -> ModelConfig:
        m = self.raw["models"]
        overrides = dict(m["classifier_overrides" if head == "classifier" else "regressor_overrides"])
        window_bins = int(round(self.raw["train"]["window_s"] * self.raw["spectrogram"]["time_bins_per_s"]))
        overrides.setdefault("input_shape", (window_bins, self.raw["spectrogram"]["n_mels"]))
        overrides.setdefault("dropout_p", self.raw["train"]["dropout_p"])
        return variant_config(m["variant"], head, **overrides)

    def data(self, key: str):
        return self.raw["data"][key]

    def sweep(self, key: str):
        return self.raw["sweep"][key]

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=1, sort_keys=True)

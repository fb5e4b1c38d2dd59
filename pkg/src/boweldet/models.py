"""Model definitions for the two detector stages, plus weight-file IO.

Both stages share the conv trunk shape: [conv 3x3 same + relu + 2x2 pool]
per filter count, then flatten, then [dense + relu + dropout] blocks, then
the head. The classifier head is one sigmoid unit; the regressor head maps
two units to (offset, scale).

Weight files are a JSON header (layer specs, shapes, seed, spectrogram
config hash, payload checksum) followed by the raw little-endian float32
parameter payload in declaration order.
"""

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from boweldet.errors import CorruptModel, InvalidConfig
from boweldet.nn import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    IntervalHead,
    MaxPool2d,
    Network,
    ReLU,
    Sigmoid,
)

MAGIC = b"BDWT"


@dataclass(frozen=True)
class ModelConfig:
    input_shape: tuple = (126, 64)
    conv_filters: tuple = (8, 16, 16)
    kernel: tuple = (3, 3)
    pool: tuple = (2, 2)
    dense_units: tuple = (256, 256)
    head: str = "classifier"  # or "regressor"
    dropout_p: float = 0.2
    padding: str = "same"

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "conv_filters", tuple(self.conv_filters))
        object.__setattr__(self, "kernel", tuple(self.kernel))
        object.__setattr__(self, "pool", tuple(self.pool))
        object.__setattr__(self, "dense_units", tuple(self.dense_units))

    def head_units(self) -> int:
        return 1 if self.head == "classifier" else 2


def build_model(cfg: ModelConfig, seed: int = 42) -> Network:
    """Construct and He/Glorot-initialize a network for the given config."""
    if not cfg.conv_filters or not cfg.dense_units:
        raise InvalidConfig("conv_filters and dense_units must be non-empty")
    if cfg.head not in ("classifier", "regressor"):
        raise InvalidConfig(f"unknown head {cfg.head!r}")
    rng = np.random.default_rng(seed)
    layers = []
    h, w = cfg.input_shape
    ci = 1
    for f in cfg.conv_filters:
        conv = Conv2d(ci, f, kernel=cfg.kernel, padding=cfg.padding)
        _init_he_uniform(conv, rng)
        layers += [conv, ReLU(), MaxPool2d(cfg.pool)]
        if cfg.padding == "valid":
            h, w = h - cfg.kernel[0] + 1, w - cfg.kernel[1] + 1
        if h < cfg.pool[0] or w < cfg.pool[1]:
            raise InvalidConfig(
                f"pooling underflow: map {h}x{w} smaller than pool {cfg.pool}"
            )
        h, w = h // cfg.pool[0], w // cfg.pool[1]
        ci = f
    layers.append(Flatten())
    units = h * w * ci
    for u in cfg.dense_units:
        dense = Dense(units, u)
        _init_glorot_uniform(dense, rng)
        layers += [dense, ReLU(), Dropout(cfg.dropout_p)]
        units = u
    out = Dense(units, cfg.head_units())
    _init_glorot_uniform(out, rng)
    layers.append(out)
    layers.append(Sigmoid() if cfg.head == "classifier" else IntervalHead())
    return Network(layers)


def _init_he_uniform(conv: Conv2d, rng) -> None:
    fan_in = conv.kernel[0] * conv.kernel[1] * conv.in_channels
    limit = np.sqrt(6.0 / fan_in)
    conv.weight.value = rng.uniform(-limit, limit, conv.weight.value.shape).astype(np.float32)


def _init_glorot_uniform(dense: Dense, rng) -> None:
    limit = np.sqrt(6.0 / (dense.in_units + dense.out_units))
    dense.weight.value = rng.uniform(-limit, limit, dense.weight.value.shape).astype(np.float32)


def classifier_config(**overrides) -> ModelConfig:
    return ModelConfig(**{"head": "classifier", "dense_units": (256, 256), **overrides})


def regressor_config(**overrides) -> ModelConfig:
    return ModelConfig(**{"head": "regressor", "dense_units": (512, 512), **overrides})


# Architecture presets used by the experiment harness. "baseline" is the
# configuration the detector ships with; the others re-create the bigger /
# smaller / deeper trunks explored alongside it.
VARIANTS = {
    "baseline": {},
    "bigger": {"conv_filters": (8, 16, 32, 32), "dense_units": (512, 512)},
    "smaller": {"dense_units": (128, 128)},
    "deeper": {"conv_filters": (8, 16, 16, 16, 16)},
}


def variant_config(name: str, head: str, **overrides) -> ModelConfig:
    if name not in VARIANTS:
        raise InvalidConfig(f"unknown architecture variant {name!r}; have {sorted(VARIANTS)}")
    base = dict(VARIANTS[name])
    if head == "classifier":
        cfg = {"head": "classifier", "dense_units": (256, 256)}
    else:
        cfg = {"head": "regressor", "dense_units": (512, 512)}
    cfg.update(base)
    cfg.update(overrides)
    return ModelConfig(**cfg)


def save_model(path: str | Path, net: Network, cfg: ModelConfig, seed: int,
               spectrogram_config_hash: str = "") -> None:
    payload = b"".join(np.ascontiguousarray(p.value, dtype="<f4").tobytes()
                       for p in net.params())
    header = {
        "format": "boweldet-weights",
        "version": 1,
        "model": asdict(cfg),
        "seed": int(seed),
        "spectrogram_config_hash": spectrogram_config_hash,
        "param_shapes": [list(p.value.shape) for p in net.params()],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)


def load_model(path: str | Path) -> tuple[Network, dict]:
    """Load a weight file; returns (network, header).

    Raises CorruptModel when the payload does not match the header
    checksum or shapes.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CorruptModel(f"{path}: not a weight file")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    try:
        header = json.loads(raw[8:8 + hlen])
    except json.JSONDecodeError:
        raise CorruptModel(f"{path}: bad header") from None
    payload = raw[8 + hlen:]
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CorruptModel(f"{path}: payload checksum mismatch")
    model = dict(header["model"])
    cfg = ModelConfig(**model)
    net = build_model(cfg, seed=header["seed"])
    params = net.params()
    shapes = [tuple(s) for s in header["param_shapes"]]
    if shapes != [p.value.shape for p in params]:
        raise CorruptModel(f"{path}: header shapes do not match the architecture")
    offset = 0
    for p in params:
        n = p.value.size
        chunk = payload[offset:offset + 4 * n]
        if len(chunk) != 4 * n:
            raise CorruptModel(f"{path}: payload truncated")
        p.value = np.frombuffer(chunk, dtype="<f4").reshape(p.value.shape).copy()
        p.grad = np.zeros_like(p.value)
        offset += 4 * n
    return net, header

"""Deterministic training loops for the classifier and the regressor.

All randomness (init, window sampling, augmentation, dropout) derives from
one seed through named SeedSequence children, so a (seed, config) pair
reproduces checkpoints byte for byte.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from boweldet.dataset import (
    DEFAULT_ALLOWED_KINDS,
    WindowSampler,
    augment_gaussian,
    filter_events,
)
from boweldet.errors import TrainingDiverged
from boweldet.losses import (
    interval_iou,
    mse_regression_loss,
    regression_loss,
    weighted_bce,
)
from boweldet.models import ModelConfig, build_model, classifier_config, regressor_config
from boweldet.nn import Network
from boweldet.optim import Adam


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 250
    steps_per_epoch: int = 100
    batch_size: int = 256
    lr: float = 1e-4
    weight_decay: float = 1e-4
    w_pos: float = 3.0
    pos_neg_ratio: tuple = (1, 3)
    gauss_std_max: float = 0.15
    dropout_p: float = 0.2
    seed: int = 42
    alpha: float = 1.0
    beta: float = 1.0
    regression_loss: str = "iou"  # or "mse"
    window_s: float = 0.2
    jitter_frac: float = 0.25
    filter_max_duration_s: float = 0.2
    filter_kinds: tuple = tuple(sorted(k.value for k in DEFAULT_ALLOWED_KINDS))
    val_batches: int = 4

    def __post_init__(self):
        object.__setattr__(self, "pos_neg_ratio", tuple(self.pos_neg_ratio))
        object.__setattr__(self, "filter_kinds", tuple(self.filter_kinds))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_loss: float
    valid_metric: float


def history_to_csv(history: list[EpochRecord]) -> str:
    lines = ["epoch,train_loss,valid_loss,valid_metric"]
    for h in history:
        lines.append(f"{h.epoch},{h.train_loss:.8f},{h.valid_loss:.8f},{h.valid_metric:.8f}")
    return "\n".join(lines) + "\n"


def write_history(path: str | Path, history: list[EpochRecord]) -> None:
    Path(path).write_text(history_to_csv(history))


def _seeds(base_seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(base_seed).spawn(n)]


def _event_filter(cfg: TrainConfig):
    kinds = tuple(cfg.filter_kinds)
    return lambda events: filter_events(events, cfg.filter_max_duration_s, kinds)


def _batches(stream, batch_size, std_max, aug_rng, with_targets):
    xs, ys = [], []
    for sample in stream:
        sample = augment_gaussian(sample, std_max, aug_rng)
        xs.append(sample.spec_slice)
        if with_targets:
            ys.append((sample.target_offset, sample.target_scale))
        else:
            ys.append(sample.label)
        if len(xs) == batch_size:
            x = np.stack(xs)[..., None].astype(np.float32)
            y = np.asarray(ys, dtype=np.float32)
            xs, ys = [], []
            yield x, y


def _collect(stream, n, with_targets):
    xs, ys = [], []
    for sample in stream:
        xs.append(sample.spec_slice)
        ys.append((sample.target_offset, sample.target_scale) if with_targets else sample.label)
        if len(xs) == n:
            break
    return np.stack(xs)[..., None].astype(np.float32), np.asarray(ys, dtype=np.float32)


def _eval_in_chunks(net: Network, x: np.ndarray, chunk: int = 256) -> np.ndarray:
    outs = [net.forward(x[i:i + chunk], train=False) for i in range(0, len(x), chunk)]
    return np.concatenate(outs, axis=0)


class _BestCheckpoint:
    def __init__(self, net: Network):
        self.net = net
        self.loss = math.inf
        self.values = [p.value.copy() for p in net.params()]

    def update(self, loss: float) -> None:
        if loss < self.loss:
            self.loss = loss
            self.values = [p.value.copy() for p in self.net.params()]

    def restore(self) -> None:
        for p, v in zip(self.net.params(), self.values):
            p.value[...] = v


def _train_loop(net, cfg, train_stream, val_x, val_y, loss_on_batch, val_metric):
    seeds = _seeds(cfg.seed, 4)
    drop_rng = np.random.default_rng(seeds[2])
    aug_rng = np.random.default_rng(seeds[3])
    opt = Adam(net.params(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    best = _BestCheckpoint(net)
    history: list[EpochRecord] = []
    with_targets = val_y.ndim == 2
    batches = _batches(train_stream, cfg.batch_size, cfg.gauss_std_max, aug_rng, with_targets)
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for step in range(1, cfg.steps_per_epoch + 1):
            x, y = next(batches)
            pred = net.forward(x, train=True, rng=drop_rng)
            loss, dpred = loss_on_batch(pred, y)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, step)
            net.zero_grads()
            net.backward(dpred)
            opt.step()
            total += loss
        val_pred = _eval_in_chunks(net, val_x)
        val_loss, _ = loss_on_batch(val_pred, val_y)
        if not math.isfinite(val_loss):
            raise TrainingDiverged(epoch)
        train_loss = total / max(cfg.steps_per_epoch, 1)
        history.append(EpochRecord(epoch, train_loss, val_loss, val_metric(val_pred, val_y)))
        best.update(val_loss)
    best.restore()
    return net, history


def train_classifier(store, train_ids, valid_ids, cfg: TrainConfig,
                     model_cfg: ModelConfig | None = None):
    """Train the window classifier; returns (net, history) with the
    weights of the lowest-validation-loss epoch."""
    model_cfg = model_cfg or classifier_config(dropout_p=cfg.dropout_p)
    seeds = _seeds(cfg.seed, 4)
    net = build_model(model_cfg, seed=seeds[0])
    flt = _event_filter(cfg)
    sampler = WindowSampler(store, train_ids, cfg.window_s, cfg.jitter_frac, event_filter=flt)
    stream = sampler.stream(cfg.pos_neg_ratio, seed=seeds[1])
    val_sampler = WindowSampler(store, valid_ids, cfg.window_s, cfg.jitter_frac, event_filter=flt)
    val_x, val_y = _collect(val_sampler.stream(cfg.pos_neg_ratio, seed=cfg.seed + 1),
                            cfg.val_batches * cfg.batch_size, with_targets=False)

    def loss_on_batch(pred, y):
        return weighted_bce(pred, y.reshape(pred.shape), cfg.w_pos)

    def accuracy(pred, y):
        return float(((pred.ravel() > 0.5) == (y.ravel() > 0.5)).mean())

    return _train_loop(net, cfg, stream, val_x, val_y, loss_on_batch, accuracy)


def train_regressor(store, train_ids, valid_ids, cfg: TrainConfig,
                    model_cfg: ModelConfig | None = None):
    """Train the interval regressor on positive windows only."""
    model_cfg = model_cfg or regressor_config(dropout_p=cfg.dropout_p)
    seeds = _seeds(cfg.seed, 4)
    net = build_model(model_cfg, seed=seeds[0])
    flt = _event_filter(cfg)
    sampler = WindowSampler(store, train_ids, cfg.window_s, cfg.jitter_frac, event_filter=flt)
    stream = sampler.stream((1, 0), seed=seeds[1])
    val_sampler = WindowSampler(store, valid_ids, cfg.window_s, cfg.jitter_frac, event_filter=flt)
    val_x, val_y = _collect(val_sampler.stream((1, 0), seed=cfg.seed + 1),
                            cfg.val_batches * cfg.batch_size, with_targets=True)

    if cfg.regression_loss == "mse":
        def loss_on_batch(pred, y):
            return mse_regression_loss(pred, y)
    else:
        def loss_on_batch(pred, y):
            return regression_loss(pred, y, cfg.alpha, cfg.beta)

    def mean_iou(pred, y):
        return float(np.mean(interval_iou(pred, y)))

    return _train_loop(net, cfg, stream, val_x, val_y, loss_on_batch, mean_iou)

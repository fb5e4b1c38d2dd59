import math

import numpy as np
import pytest

from boweldet.dataset import SoundEvent
from boweldet.errors import TrainingDiverged
from boweldet.losses import regression_loss, weighted_bce
from boweldet.models import build_model, classifier_config, regressor_config
from boweldet.optim import Adam
from boweldet.trainer import (
    TrainConfig,
    history_to_csv,
    train_classifier,
    train_regressor,
)

from helpers import memory_store, random_events


def _toy_store(seed=50, n_rec=6, rows=1260):
    """Recordings where positives carry a bright patch the model can learn."""
    rng = np.random.default_rng(seed)
    recordings = {}
    for i in range(n_rec):
        values = (rng.random((rows, 24)) * 0.3).astype(np.float32)
        events = random_events(rng, 3, t_max=rows / 630, d_range=(0.02, 0.04))
        for e in events:
            lo = int(e.start_s * 630)
            hi = int(e.end_s * 630)
            values[lo:hi, 4:20] += 0.6
        np.clip(values, 0.0, 1.0, out=values)
        recordings[f"r{i}"] = (values, events)
    return memory_store(recordings)


SMALL_MODEL = dict(input_shape=(126, 24), conv_filters=(4, 8), dense_units=(32,))


def _tiny_cfg(**kw):
    defaults = dict(epochs=2, steps_per_epoch=10, batch_size=16, lr=1e-3,
                    val_batches=1, gauss_std_max=0.05, seed=42)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestTrainClassifier:
    def test_runs_and_returns_history(self):
        store = _toy_store()
        net, history = train_classifier(store, ["r0", "r1", "r2", "r3"], ["r4", "r5"],
                                        _tiny_cfg(),
                                        classifier_config(**SMALL_MODEL))
        assert len(history) == 2
        assert all(math.isfinite(h.train_loss) for h in history)
        assert all(0.0 <= h.valid_metric <= 1.0 for h in history)

    def test_deterministic_weights(self):
        store = _toy_store()

        def run():
            net, _ = train_classifier(store, ["r0", "r1", "r2", "r3"], ["r4", "r5"],
                                      _tiny_cfg(),
                                      classifier_config(**SMALL_MODEL))
            return b"".join(p.value.tobytes() for p in net.params())

        assert run() == run()

    def test_zero_epochs_returns_initialized_network(self):
        store = _toy_store()
        cfg = _tiny_cfg(epochs=0)
        net, history = train_classifier(store, ["r0", "r1"], ["r2"], cfg,
                                        classifier_config(**SMALL_MODEL))
        assert history == []
        fresh = build_model(classifier_config(**SMALL_MODEL),
                            seed=_first_seed(cfg.seed))
        for p, q in zip(net.params(), fresh.params()):
            assert np.array_equal(p.value, q.value)

    def test_best_checkpoint_minimizes_validation_loss(self):
        store = _toy_store()
        cfg = _tiny_cfg(epochs=4)
        net, history = train_classifier(store, ["r0", "r1", "r2", "r3"], ["r4", "r5"],
                                        cfg, classifier_config(**SMALL_MODEL))
        # recompute validation loss of the returned checkpoint
        from boweldet.dataset import WindowSampler
        from boweldet.trainer import _collect, _event_filter
        sampler = WindowSampler(store, ["r4", "r5"], cfg.window_s, cfg.jitter_frac,
                                event_filter=_event_filter(cfg))
        val_x, val_y = _collect(sampler.stream(cfg.pos_neg_ratio, seed=cfg.seed + 1),
                                cfg.val_batches * cfg.batch_size, with_targets=False)
        pred = net.forward(val_x, train=False)
        loss, _ = weighted_bce(pred, val_y.reshape(pred.shape), cfg.w_pos)
        best = min(h.valid_loss for h in history)
        assert loss == pytest.approx(best, rel=1e-5)
        assert all(best <= h.valid_loss + 1e-12 for h in history)

    def test_divergence_detected(self):
        store = _toy_store()
        nan_values = store.spectrogram("r0").copy()
        nan_values[50:100] = np.nan
        recordings = {"r0": (nan_values, store.events("r0")),
                      "r1": (store.spectrogram("r1"), store.events("r1"))}
        bad = memory_store(recordings)
        with pytest.raises(TrainingDiverged) as err:
            train_classifier(bad, ["r0", "r1"], ["r0"], _tiny_cfg(),
                             classifier_config(**SMALL_MODEL))
        assert err.value.epoch >= 1

    def test_overfits_tiny_batch(self):
        # 20 fixed windows, 500 step budget: training BCE goes below 0.05
        rng = np.random.default_rng(0)
        x = rng.random((20, 126, 64, 1), dtype=np.float32) * 0.3
        y = (np.arange(20) < 5).astype(np.float32).reshape(20, 1)
        x[:5, 40:70, 20:40, 0] += 0.6
        net = build_model(classifier_config(dropout_p=0.0), seed=1)
        opt = Adam(net.params(), lr=1e-3)
        drop = np.random.default_rng(2)
        loss = math.inf
        for step in range(500):
            p = net.forward(x, train=True, rng=drop)
            loss, dp = weighted_bce(p, y, 3.0)
            if loss < 0.05:
                break
            net.zero_grads()
            net.backward(dp)
            opt.step()
        assert loss < 0.05


class TestTrainRegressor:
    def test_positive_only_stream_and_history(self):
        store = _toy_store()
        net, history = train_regressor(store, ["r0", "r1", "r2", "r3"], ["r4", "r5"],
                                       _tiny_cfg(),
                                       regressor_config(**SMALL_MODEL))
        assert len(history) == 2
        assert all(0.0 <= h.valid_metric <= 1.0 for h in history)

    def test_first_batch_loss_bound(self):
        store = _toy_store()
        _, history = train_regressor(store, ["r0", "r1"], ["r2"],
                                     _tiny_cfg(epochs=1, steps_per_epoch=1),
                                     regressor_config(**SMALL_MODEL))
        assert history[0].train_loss <= 2.5  # 1 + alpha + beta with defaults

    def test_mse_variant_runs(self):
        store = _toy_store()
        _, history = train_regressor(store, ["r0", "r1"], ["r2"],
                                     _tiny_cfg(regression_loss="mse"),
                                     regressor_config(**SMALL_MODEL))
        assert len(history) == 2

    def test_unmodified_iou_configuration(self):
        # alpha = beta = 0 reduces the loss to 1 - IoU
        store = _toy_store()
        cfg = _tiny_cfg(alpha=0.0, beta=0.0, epochs=1, steps_per_epoch=2)
        _, history = train_regressor(store, ["r0", "r1"], ["r2"], cfg,
                                     regressor_config(**SMALL_MODEL))
        assert all(h.train_loss <= 1.0 + 1e-9 for h in history)

    def test_overfits_ten_positives(self):
        rng = np.random.default_rng(3)
        x = rng.random((10, 126, 64, 1), dtype=np.float32) * 0.3
        t = np.column_stack([rng.uniform(-0.4, 0.4, 10),
                             rng.uniform(0.1, 0.9, 10)]).astype(np.float32)
        net = build_model(regressor_config(dropout_p=0.0), seed=1)
        opt = Adam(net.params(), lr=1e-3)
        drop = np.random.default_rng(4)
        loss = math.inf
        for step in range(500):
            p = net.forward(x, train=True, rng=drop)
            loss, dp = regression_loss(p, t, 1.0, 1.0)
            if loss < 0.1:
                break
            net.zero_grads()
            net.backward(dp)
            opt.step()
        assert loss < 0.1


class TestHistoryCsv:
    def test_format(self):
        from boweldet.trainer import EpochRecord

        text = history_to_csv([EpochRecord(1, 0.5, 0.25, 0.75)])
        lines = text.strip().split("\n")
        assert lines[0] == "epoch,train_loss,valid_loss,valid_metric"
        assert lines[1] == "1,0.50000000,0.25000000,0.75000000"


def _first_seed(base_seed):
    return int(np.random.SeedSequence(base_seed).spawn(4)[0].generate_state(1)[0])

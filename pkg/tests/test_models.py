import warnings

import numpy as np
import pytest

from boweldet.errors import CorruptModel, InvalidConfig
from boweldet.models import (
    ModelConfig,
    VARIANTS,
    build_model,
    classifier_config,
    load_model,
    regressor_config,
    save_model,
    variant_config,
)


class TestBuild:
    def test_classifier_outputs_single_probability(self):
        net = build_model(classifier_config(), seed=0)
        x = np.random.default_rng(0).random((3, 126, 64, 1), dtype=np.float32)
        out = net.forward(x)
        assert out.shape == (3, 1)
        assert np.all((out > 0) & (out < 1))

    def test_regressor_output_ranges(self):
        net = build_model(regressor_config(), seed=0)
        x = np.random.default_rng(1).random((5, 126, 64, 1), dtype=np.float32)
        out = net.forward(x)
        assert out.shape == (5, 2)
        assert np.all(out[:, 0] >= -0.5) and np.all(out[:, 0] <= 0.5)
        assert np.all(out[:, 1] > 0.0) and np.all(out[:, 1] <= 1.0)

    def test_default_parameter_counts(self):
        # frozen counts for the shipped architecture; the regressor lands
        # within 10% of the published 1,253,170 total
        assert build_model(classifier_config(), 0).param_count() == 561_393
        regressor = build_model(regressor_config(), 0).param_count()
        assert regressor == 1_250_802
        assert abs(regressor - 1_253_170) / 1_253_170 < 0.10

    def test_deterministic_init(self):
        a = build_model(classifier_config(), seed=9)
        b = build_model(classifier_config(), seed=9)
        for pa, pb in zip(a.params(), b.params()):
            assert np.array_equal(pa.value, pb.value)
        c = build_model(classifier_config(), seed=10)
        assert any(not np.array_equal(pa.value, pc.value)
                   for pa, pc in zip(a.params(), c.params()))

    def test_pooling_underflow_rejected(self):
        cfg = ModelConfig(input_shape=(8, 8), conv_filters=(4, 4, 4, 4))
        with pytest.raises(InvalidConfig):
            build_model(cfg, 0)

    def test_empty_layers_rejected(self):
        with pytest.raises(InvalidConfig):
            build_model(ModelConfig(conv_filters=()), 0)

    @pytest.mark.parametrize("name", sorted(VARIANTS))
    @pytest.mark.parametrize("head", ["classifier", "regressor"])
    def test_variants_build_and_run(self, name, head):
        cfg = variant_config(name, head)
        net = build_model(cfg, seed=0)
        x = np.random.default_rng(2).random((2, 126, 64, 1), dtype=np.float32)
        out = net.forward(x)
        assert out.shape == (2, 1 if head == "classifier" else 2)

    def test_bigger_variant_is_bigger(self):
        base = build_model(variant_config("baseline", "classifier"), 0).param_count()
        big = build_model(variant_config("bigger", "classifier"), 0).param_count()
        small = build_model(variant_config("smaller", "classifier"), 0).param_count()
        assert big > base > small


class TestSerialization:
    def test_roundtrip_identical_outputs(self, tmp_path):
        net = build_model(classifier_config(), seed=4)
        path = tmp_path / "m.bdwt"
        save_model(path, net, classifier_config(), seed=4, spectrogram_config_hash="h1")
        loaded, header = load_model(path)
        assert header["spectrogram_config_hash"] == "h1"
        x = np.random.default_rng(4).random((2, 126, 64, 1), dtype=np.float32)
        assert np.array_equal(net.forward(x), loaded.forward(x))

    def test_truncated_payload(self, tmp_path):
        net = build_model(classifier_config(dense_units=(8, 8)), seed=5)
        path = tmp_path / "m.bdwt"
        save_model(path, net, classifier_config(dense_units=(8, 8)), 5)
        raw = path.read_bytes()
        path.write_bytes(raw[:-100])
        with pytest.raises(CorruptModel):
            load_model(path)

    def test_corrupted_payload_hash(self, tmp_path):
        net = build_model(classifier_config(dense_units=(8, 8)), seed=5)
        path = tmp_path / "m.bdwt"
        save_model(path, net, classifier_config(dense_units=(8, 8)), 5)
        raw = bytearray(path.read_bytes())
        raw[-5] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptModel):
            load_model(path)

    def test_not_a_weight_file(self, tmp_path):
        path = tmp_path / "m.bdwt"
        path.write_bytes(b"hello world")
        with pytest.raises(CorruptModel):
            load_model(path)

    def test_save_is_deterministic(self, tmp_path):
        cfg = classifier_config(dense_units=(16, 16))
        net = build_model(cfg, seed=6)
        save_model(tmp_path / "a.bdwt", net, cfg, 6, "h")
        save_model(tmp_path / "b.bdwt", net, cfg, 6, "h")
        assert (tmp_path / "a.bdwt").read_bytes() == (tmp_path / "b.bdwt").read_bytes()

import warnings

import numpy as np
import pytest

from boweldet.dataset import (
    AnnotatedRecording,
    DatasetSplit,
    EventKind,
    SoundEvent,
    WindowSampler,
    augment_gaussian,
    filter_events,
    label_window,
    negative_window_starts,
    parse_annotations,
    split_dataset,
)
from boweldet.errors import (
    EmptyClassError,
    InvalidInterval,
    ParseError,
    StratificationWarning,
)

from helpers import brute_force_label, memory_store, random_events


class TestParse:
    def test_basic_line(self):
        events = parse_annotations("0.120,0.150,sb")
        assert len(events) == 1
        e = events[0]
        assert (e.start_s, e.end_s, e.kind) == (0.120, 0.150, EventKind.single_burst)

    def test_whitespace_separator(self):
        events = parse_annotations("0.1 0.2 db\n0.4\t0.5\tmb\n")
        assert [e.kind for e in events] == [EventKind.distinct_burst, EventKind.multiple_burst]

    def test_empty_file(self):
        assert parse_annotations("") == []
        assert parse_annotations("\n\n") == []

    def test_sorted_by_start(self):
        events = parse_annotations("0.5,0.6,sb\n0.1,0.2,sb\n0.3,0.4,sb")
        assert [e.start_s for e in events] == [0.1, 0.3, 0.5]

    def test_unknown_kind_maps_to_other(self):
        assert parse_annotations("0.1,0.2,zzz")[0].kind == EventKind.other

    def test_parse_error_carries_line_number(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_annotations("0.1,0.2,sb\nnot,numeric,sb")

    def test_wrong_field_count(self):
        with pytest.raises(ParseError):
            parse_annotations("0.1,0.2")

    def test_inverted_interval(self):
        with pytest.raises(InvalidInterval):
            parse_annotations("0.5,0.2,sb")


class TestFilter:
    def test_long_multiple_burst_removed(self):
        events = [SoundEvent(0.0, 1.5, EventKind.multiple_burst),
                  SoundEvent(0.1, 0.12, EventKind.single_burst)]
        kept = filter_events(events, max_duration_s=0.2)
        assert len(kept) == 1 and kept[0].kind == EventKind.single_burst

    def test_duration_rule_applies_to_allowed_kinds_too(self):
        events = [SoundEvent(0.0, 0.3, EventKind.single_burst)]
        assert filter_events(events, max_duration_s=0.2) == []

    def test_order_preserved(self):
        events = [SoundEvent(0.3, 0.32), SoundEvent(0.1, 0.12), SoundEvent(0.5, 0.52)]
        assert filter_events(events) == events

    def test_empty(self):
        assert filter_events([]) == []


def _recordings(counts):
    recs = []
    for i, c in enumerate(counts):
        events = [SoundEvent(0.1 * (k + 1), 0.1 * (k + 1) + 0.02) for k in range(c)]
        recs.append(AnnotatedRecording(id=f"r{i:04d}", audio_path="", events=events,
                                       duration_s=2.0))
    return recs


class TestSplit:
    def test_exact_proportions_single_stratum(self):
        split = split_dataset(_recordings([2] * 10), (0.7, 0.2, 0.1), seed=0)
        assert (len(split.train), len(split.valid), len(split.test)) == (7, 2, 1)

    def test_deterministic(self):
        recs = _recordings(list(range(40)))
        a = split_dataset(recs, seed=42)
        b = split_dataset(recs, seed=42)
        assert (a.train, a.valid, a.test) == (b.train, b.valid, b.test)
        c = split_dataset(recs, seed=43)
        assert (a.train, a.valid, a.test) != (c.train, c.valid, c.test)

    def test_partition_and_global_tolerance(self):
        rng = np.random.default_rng(9)
        recs = _recordings([int(rng.integers(0, 12)) for _ in range(1605)])
        split = split_dataset(recs, (0.7, 0.2, 0.1), seed=42)
        ids = split.train + split.valid + split.test
        assert sorted(ids) == sorted(r.id for r in recs)
        assert abs(len(split.train) - 1123.5) <= 1
        assert abs(len(split.valid) - 321) <= 1
        assert abs(len(split.test) - 160.5) <= 1

    def test_stratification_warning_fallback(self):
        recs = _recordings([0, 1, 4, 9, 2])  # 4 occupied strata, 5 recordings
        with pytest.warns(StratificationWarning):
            split = split_dataset(recs, seed=1)
        assert sorted(split.train + split.valid + split.test) == [r.id for r in recs]

    def test_manifest_roundtrip(self):
        split = split_dataset(_recordings([1] * 10), seed=5)
        again = DatasetSplit.from_json(split.to_json())
        assert (again.train, again.valid, again.test, again.seed) == \
            (split.train, split.valid, split.test, split.seed)

    def test_manifest_key_set(self):
        import json

        split = split_dataset(_recordings([1] * 6), seed=5)
        assert set(json.loads(split.to_json())) == {"seed", "train", "valid", "test"}


class TestLabelWindow:
    def test_worked_example(self):
        events = [SoundEvent(0.10, 0.13)]
        lab = label_window(0.05, 0.2, events)
        assert lab.positive
        assert lab.offset == pytest.approx(-0.175)
        assert lab.scale == pytest.approx(0.15)

    def test_centered_window_length_event(self):
        events = [SoundEvent(0.1, 0.3)]
        lab = label_window(0.1, 0.2, events)
        assert lab.positive
        assert lab.offset == pytest.approx(0.0)
        assert lab.scale == pytest.approx(1.0)

    def test_quarter_overlap_is_negative(self):
        events = [SoundEvent(0.00, 0.04)]
        lab = label_window(0.03, 0.2, events)
        assert not lab.positive and lab.offset is None and lab.scale is None

    def test_agrees_with_brute_force(self):
        rng = np.random.default_rng(10)
        for _ in range(10_000):
            events = random_events(rng, int(rng.integers(0, 4)), d_range=(0.005, 0.35))
            start = rng.uniform(0, 1.8)
            lab = label_window(start, 0.2, events)
            oracle = brute_force_label(start, 0.2, events)
            if oracle is None:
                assert not lab.positive
            else:
                assert lab.positive
                assert lab.offset == pytest.approx(oracle[0], abs=1e-12)
                assert lab.scale == pytest.approx(oracle[1], abs=1e-12)

    def test_reconstruction_overlaps_source_event(self):
        # interval rebuilt from (offset, scale) must cover >= 50% of the event
        rng = np.random.default_rng(11)
        checked = 0
        for _ in range(5000):
            events = random_events(rng, 1, d_range=(0.005, 0.35))
            start = rng.uniform(0, 1.8)
            lab = label_window(start, 0.2, events)
            if not lab.positive:
                continue
            checked += 1
            center = start + 0.1 + lab.offset * 0.2
            length = lab.scale * 0.2
            lo, hi = center - length / 2, center + length / 2
            e = events[0]
            overlap = min(hi, e.end_s) - max(lo, e.start_s)
            assert overlap >= 0.5 * e.duration_s - 1e-9
        assert checked > 200


class TestNegativeStarts:
    def test_matches_label_window(self):
        rng = np.random.default_rng(12)
        window_bins, r = 126, 630
        for _ in range(50):
            n_bins = int(rng.integers(300, 1261))
            events = random_events(rng, int(rng.integers(0, 5)),
                                   t_max=n_bins / r, d_range=(0.005, 0.3))
            negatives = set(negative_window_starts(n_bins, window_bins, r, events).tolist())
            for b in range(0, n_bins - window_bins + 1, 7):
                expected = not label_window(b / r, window_bins / r, events).positive
                assert (b in negatives) == expected


def _sampler_store(rng=None, n_rec=6, events_per=2):
    rng = rng or np.random.default_rng(20)
    recordings = {}
    for i in range(n_rec):
        values = rng.random((1260, 16), dtype=np.float32)
        events = random_events(rng, events_per, d_range=(0.01, 0.04))
        recordings[f"r{i}"] = (values, events)
    return memory_store(recordings)


class TestSampler:
    def test_ratio_is_exact_per_cycle(self):
        sampler = WindowSampler(_sampler_store(), [f"r{i}" for i in range(6)])
        stream = sampler.stream((1, 3), seed=0)
        labels = [next(stream).label for _ in range(4000)]
        assert sum(labels) == 1000  # exactly 1:3 in 4000 draws

    def test_deterministic_stream(self):
        store = _sampler_store()
        ids = [f"r{i}" for i in range(6)]
        a = WindowSampler(store, ids).stream((1, 3), seed=7)
        b = WindowSampler(store, ids).stream((1, 3), seed=7)
        for _ in range(100):
            sa, sb = next(a), next(b)
            assert sa.source == sb.source and sa.label == sb.label
            assert np.array_equal(sa.spec_slice, sb.spec_slice)

    def test_positive_only_ratio(self):
        sampler = WindowSampler(_sampler_store(), [f"r{i}" for i in range(6)])
        stream = sampler.stream((1, 0), seed=1)
        for _ in range(50):
            s = next(stream)
            assert s.label == 1
            assert -0.5 <= s.target_offset <= 0.5
            assert 0.0 < s.target_scale <= 1.0

    def test_positive_windows_center_near_event(self):
        store = _sampler_store()
        sampler = WindowSampler(store, [f"r{i}" for i in range(6)])
        stream = sampler.stream((1, 0), seed=3)
        offsets = np.array([next(stream).target_offset for _ in range(200)])
        assert np.all(np.abs(offsets) <= 0.5)
        # jitter is at most a quarter window; occasionally the label comes
        # from a neighbouring event with larger overlap, so allow a tail
        assert np.mean(np.abs(offsets) <= 0.26) > 0.9
        assert offsets.std() > 0.05  # regression sees varied positions

    def test_negative_samples_label_negative(self):
        store = _sampler_store()
        sampler = WindowSampler(store, [f"r{i}" for i in range(6)])
        stream = sampler.stream((0, 1), seed=4)
        for _ in range(200):
            s = next(stream)
            assert s.label == 0 and s.target_offset is None

    def test_empty_positive_class_raises(self):
        rng = np.random.default_rng(21)
        store = memory_store({"r0": (rng.random((1260, 16), dtype=np.float32), [])})
        sampler = WindowSampler(store, ["r0"])
        with pytest.raises(EmptyClassError):
            sampler.stream((1, 3), seed=0)

    def test_window_shape(self):
        sampler = WindowSampler(_sampler_store(), ["r0"])
        s = next(sampler.stream((1, 1), seed=0))
        assert s.spec_slice.shape == (126, 16)


class TestAugment:
    def _sample(self, fill=0.5):
        from boweldet.dataset import WindowSample

        return WindowSample(np.full((126, 16), fill, np.float32), 1, 0.1, 0.2, ("r", 0))

    def test_zero_std_is_identity(self):
        s = self._sample()
        out = augment_gaussian(s, 0.0, np.random.default_rng(0))
        assert np.array_equal(out.spec_slice, s.spec_slice)

    def test_values_stay_clamped(self):
        s = self._sample(fill=1.0)
        out = augment_gaussian(s, 0.5, np.random.default_rng(1))
        assert out.spec_slice.max() <= 1.0
        assert out.spec_slice.min() >= 0.0

    def test_mean_absolute_perturbation_bound(self):
        s = self._sample()
        rng = np.random.default_rng(2)
        diffs = []
        for _ in range(6):
            out = augment_gaussian(s, 0.15, rng)
            diffs.append(np.abs(out.spec_slice - s.spec_slice))
        mean_abs = float(np.mean(diffs))  # > 10^4 cells
        assert mean_abs < 0.12

    def test_labels_unchanged(self):
        s = self._sample()
        out = augment_gaussian(s, 0.3, np.random.default_rng(3))
        assert (out.label, out.target_offset, out.target_scale) == (1, 0.1, 0.2)

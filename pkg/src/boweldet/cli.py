"""Command-line harness: preprocess, train, predict, evaluate, sweep,
dataset-stats. All commands read one JSON config; flags override file
values which override defaults. Exit codes: 0 success, 1 user error,
2 internal error.
"""

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from boweldet.audio import low_pass, read_wav
from boweldet.config import RunConfig
from boweldet.dataset import (
    AnnotatedRecording,
    DatasetSplit,
    EventKind,
    filter_events,
    parse_annotations,
    split_dataset,
)
from boweldet.errors import BowelDetError, EvaluationError
from boweldet.inference import (
    Detection,
    aggregate,
    canonical_intervals,
    check_model_compat,
    detect,
    meta_combine,
    read_intervals_csv,
    refine_interval,
    regress_windows,
    slide_windows,
    window_probabilities,
    write_detections_csv,
    write_intervals_csv,
)
from boweldet.metrics import (
    METRIC_COLUMNS,
    ConfusionCounts,
    avg_event_iou,
    binary_mask,
    confusion,
    metrics_from_counts,
)
from boweldet.models import load_model, save_model
from boweldet.spectrogram import mel_spectrogram, normalize_segments
from boweldet.store import open_store, write_store
from boweldet.trainer import train_classifier, train_regressor, write_history


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def worker_count() -> int:
    cap = os.environ.get("BOWELDET_THREADS", "").strip()
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, min(n, int(cap)))
        except ValueError:
            pass
    return n


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for flag, key in [("seed", "train.seed"), ("threshold", "predict.threshold"),
                      ("vote_fraction", "predict.vote_fraction"),
                      ("overlap", "predict.overlap"), ("out", "data.out_dir")]:
        value = getattr(args, flag, None)
        if value is not None:
            cfg.override(key, value)
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.data("out_dir"))
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- preprocess

def _process_one(wav_path: Path, scfg, low_pass_hz, low_pass_taps, segment_s):
    signal = read_wav(wav_path)
    filtered = low_pass(signal, low_pass_hz, taps=low_pass_taps)
    spec = normalize_segments(mel_spectrogram(filtered, scfg), segment_s)
    return spec, signal.duration_s


def cmd_preprocess(args) -> int:
    cfg = _load_config(args)
    scfg = cfg.spectrogram_config()
    audio_dir = Path(args.audio_dir or cfg.data("audio_dir"))
    store_dir = Path(cfg.data("store_dir"))
    out = _out_dir(cfg)
    wavs = sorted(audio_dir.glob("*.wav"))
    skipped = []
    jobs = []
    for wav_path in wavs:
        ann_path = wav_path.with_suffix(".txt")
        if not ann_path.exists():
            skipped.append({"id": wav_path.stem, "reason": "missing annotation file"})
            continue
        jobs.append((wav_path, ann_path))

    def run(job):
        wav_path, ann_path = job
        try:
            events = parse_annotations(ann_path.read_text())
            spec, duration = _process_one(wav_path, scfg, cfg.data("low_pass_hz"),
                                          cfg.data("low_pass_taps"), scfg.segment_norm_s)
            return (wav_path.stem, spec.values, duration, events), None
        except BowelDetError as exc:
            return None, {"id": wav_path.stem, "reason": str(exc)}

    records = []
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        for record, skip in pool.map(run, jobs):
            if record is not None:
                records.append(record)
            else:
                skipped.append(skip)
    write_store(store_dir, records, scfg.time_bins_per_s, scfg.config_hash(),
                config=cfg.raw["spectrogram"])
    report = {"processed": len(records), "skipped": skipped}
    (out / "skip_report.json").write_text(json.dumps(report, indent=1))
    print(f"preprocessed {len(records)} recordings into {store_dir} "
          f"({len(skipped)} skipped)")
    return 0


# --------------------------------------------------------------------- train

def _load_split(cfg: RunConfig, store) -> DatasetSplit:
    split_path = Path(cfg.data("split_path"))
    if split_path.exists():
        return DatasetSplit.from_json(split_path.read_text())
    tcfg = cfg.train_config()
    kinds = tuple(EventKind(k) for k in tcfg.filter_kinds)
    recordings = [
        AnnotatedRecording(
            id=rec_id, audio_path="", duration_s=store.duration_s(rec_id),
            events=filter_events(store.events(rec_id), tcfg.filter_max_duration_s, kinds),
        )
        for rec_id in store.ids()
    ]
    split = split_dataset(recordings, tuple(cfg.data("split_ratios")), cfg.data("split_seed"))
    split_path.parent.mkdir(parents=True, exist_ok=True)
    split_path.write_text(split.to_json())
    return split


def _model_paths(cfg: RunConfig, seed: int | None = None) -> dict:
    models_dir = _out_dir(cfg) / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    tag = "" if seed is None else f"_seed{seed}"
    return {
        "classifier": models_dir / f"classifier{tag}.bdwt",
        "regressor": models_dir / f"regressor{tag}.bdwt",
    }


def cmd_train(args) -> int:
    cfg = _load_config(args)
    store = open_store(cfg.data("store_dir"))
    split = _load_split(cfg, store)
    tcfg = cfg.train_config()
    out = _out_dir(cfg)
    paths = _model_paths(cfg)
    which = ["classifier", "regressor"] if args.which == "both" else [args.which]
    for head in which:
        trainer = train_classifier if head == "classifier" else train_regressor
        net, history = trainer(store, split.train, split.valid, tcfg, cfg.model_config(head))
        save_model(paths[head], net, cfg.model_config(head), tcfg.seed, store.config_hash)
        write_history(out / f"history_{head}.csv", history)
        print(f"{head}: {net.param_count():,} parameters, "
              f"best valid loss {min((h.valid_loss for h in history), default=float('nan')):.6f}, "
              f"saved to {paths[head]}")
    return 0


# ------------------------------------------------------------------- predict

def _predict_ids(args, cfg, store) -> list[str]:
    if getattr(args, "recordings", None):
        return args.recordings.split(",")
    split_path = Path(cfg.data("split_path"))
    part = getattr(args, "part", "test")
    if part == "all" or not split_path.exists():
        return store.ids()
    return DatasetSplit.from_json(split_path.read_text()).part(part)


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    store = open_store(cfg.data("store_dir"))
    pcfg = cfg.predict_config()
    out = _out_dir(cfg)
    paths = _model_paths(cfg)
    classifier, cls_header = load_model(args.classifier or paths["classifier"])
    regressor, reg_header = load_model(args.regressor or paths["regressor"])
    check_model_compat(cls_header, store.config_hash)
    check_model_compat(reg_header, store.config_hash)
    ids = _predict_ids(args, cfg, store)
    detections: dict = {}
    intervals: dict = {}
    for rec_id in ids:
        spec = store.spectrogram(rec_id)
        dets = detect(classifier, regressor, spec, store.time_bins_per_s, pcfg,
                      duration_s=store.duration_s(rec_id))
        detections[rec_id] = dets
        intervals[rec_id] = aggregate(dets, pcfg, spec.shape[0], store.time_bins_per_s)
    if args.meta:
        if not args.external_intervals:
            raise EvaluationError("--meta requires --external-intervals")
        external, _ = read_intervals_csv(args.external_intervals)
        merged = {}
        for rec_id in sorted(set(intervals) | set(external)):
            merged[rec_id] = meta_combine(args.meta, intervals.get(rec_id, []),
                                          external.get(rec_id, []))
        intervals = merged
    chash = cfg.config_hash()
    write_detections_csv(out / "detections.csv", detections, chash)
    write_intervals_csv(out / "intervals.csv", intervals, chash)
    n = sum(len(v) for v in intervals.values())
    print(f"predicted {n} intervals over {len(ids)} recordings -> {out / 'intervals.csv'}")
    return 0


# ------------------------------------------------------------------ evaluate

def evaluate_intervals(store, per_recording: dict, ids: list[str],
                       event_filter=None) -> dict:
    """Pooled bin-level confusion metrics plus event-level average IoU."""
    counts = ConfusionCounts()
    ious = []
    for rec_id in ids:
        spec_rows = store.entries[rec_id].rows
        events = store.events(rec_id)
        if event_filter is not None:
            events = event_filter(events)
        gt_intervals = [(e.start_s, e.end_s) for e in events]
        pred = canonical_intervals(per_recording.get(rec_id, []))
        pred_mask = binary_mask(pred, spec_rows, store.time_bins_per_s)
        gt_mask = binary_mask(gt_intervals, spec_rows, store.time_bins_per_s)
        counts = counts + confusion(pred_mask, gt_mask)
        for e in events:
            ious.append(avg_event_iou(pred, [e]))
    row = metrics_from_counts(counts)
    row["avg_iou"] = float(np.mean(ious)) if ious else 0.0
    return row


def _metrics_csv_row(row: dict, extra: dict) -> str:
    cells = [f"{extra[k]}" for k in extra]
    cells += [f"{row[c]:.6f}" for c in METRIC_COLUMNS]
    return ",".join(cells)


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    store = open_store(cfg.data("store_dir"))
    per_recording, embedded_hash = read_intervals_csv(args.predictions)
    if embedded_hash and embedded_hash != cfg.config_hash() and not args.force:
        raise EvaluationError(
            f"predictions were produced with config {embedded_hash}, current is "
            f"{cfg.config_hash()}; pass --force to evaluate anyway"
        )
    ids = _predict_ids(args, cfg, store)
    known = set(store.ids())
    missing = sorted(set(per_recording) - known)
    if missing:
        raise EvaluationError(f"predictions reference unknown recording ids: {missing}")
    tcfg = cfg.train_config()
    kinds = tuple(EventKind(k) for k in tcfg.filter_kinds)
    flt = None if args.no_filter else (
        lambda evs: filter_events(evs, tcfg.filter_max_duration_s, kinds))
    row = evaluate_intervals(store, per_recording, ids, event_filter=flt)
    pcfg = cfg.predict_config()
    out = _out_dir(cfg)
    header = "config_hash,threshold,overlap,vote_fraction," + ",".join(METRIC_COLUMNS)
    extra = {"config_hash": cfg.config_hash(), "threshold": pcfg.threshold,
             "overlap": pcfg.overlap, "vote_fraction": pcfg.vote_fraction}
    csv_text = header + "\n" + _metrics_csv_row(row, extra) + "\n"
    (out / "metrics.csv").write_text(csv_text)
    print(header)
    print(_metrics_csv_row(row, extra))
    return 0


# --------------------------------------------------------------------- sweep

def _sweep_models(cfg: RunConfig, store, split, seed: int):
    paths = _model_paths(cfg, seed)
    tcfg = cfg.train_config(seed=seed)
    out = _out_dir(cfg)
    if not (paths["classifier"].exists() and paths["regressor"].exists()):
        net, history = train_classifier(store, split.train, split.valid, tcfg,
                                        cfg.model_config("classifier"))
        save_model(paths["classifier"], net, cfg.model_config("classifier"), seed,
                   store.config_hash)
        write_history(out / f"history_classifier_seed{seed}.csv", history)
        net, history = train_regressor(store, split.train, split.valid, tcfg,
                                       cfg.model_config("regressor"))
        save_model(paths["regressor"], net, cfg.model_config("regressor"), seed,
                   store.config_hash)
        write_history(out / f"history_regressor_seed{seed}.csv", history)
    classifier, cls_header = load_model(paths["classifier"])
    regressor, reg_header = load_model(paths["regressor"])
    check_model_compat(cls_header, store.config_hash)
    check_model_compat(reg_header, store.config_hash)
    return classifier, regressor


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    store = open_store(cfg.data("store_dir"))
    split = _load_split(cfg, store)
    thresholds = cfg.sweep("thresholds")
    overlaps = cfg.sweep("overlaps")
    vote_fractions = cfg.sweep("vote_fractions")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else cfg.sweep("seeds")
    if not thresholds or not overlaps or not vote_fractions or not seeds:
        raise EvaluationError("sweep grid must be non-empty")
    ids = _predict_ids(args, cfg, store)
    tcfg = cfg.train_config()
    kinds = tuple(EventKind(k) for k in tcfg.filter_kinds)
    flt = lambda evs: filter_events(evs, tcfg.filter_max_duration_s, kinds)  # noqa: E731

    cells: dict = {}  # (threshold, overlap, vote_fraction) -> list of metric rows
    errors: dict = {}
    for seed in seeds:
        classifier, regressor = _sweep_models(cfg, store, split, seed)
        for overlap in overlaps:
            # windows and stage outputs are shared by every cell of this overlap
            per_rec = {}
            for rec_id in ids:
                spec = store.spectrogram(rec_id)
                window_bins = int(round(tcfg.window_s * store.time_bins_per_s))
                starts = slide_windows(spec.shape[0], tcfg.window_s, overlap,
                                       store.time_bins_per_s)
                probs = window_probabilities(classifier, spec, starts, window_bins)
                lo = min(thresholds)
                hits = np.nonzero(probs > lo)[0]
                reg = regress_windows(regressor, spec, starts[hits], window_bins) \
                    if len(hits) else np.zeros((0, 2))
                per_rec[rec_id] = (spec.shape[0], starts, probs, hits, reg)
            for threshold in thresholds:
                for vote_fraction in vote_fractions:
                    key = (threshold, overlap, vote_fraction)
                    try:
                        pcfg = cfg.predict_config(threshold=threshold, overlap=overlap,
                                                  vote_fraction=vote_fraction)
                        intervals = {}
                        for rec_id, (n_bins, starts, probs, hits, reg) in per_rec.items():
                            dets = []
                            duration = store.duration_s(rec_id)
                            for j, widx in enumerate(hits):
                                if probs[widx] > threshold:
                                    s = starts[widx] / store.time_bins_per_s
                                    lo_s, hi_s = refine_interval(s, tcfg.window_s,
                                                                 reg[j, 0], reg[j, 1], duration)
                                    if hi_s > lo_s:
                                        dets.append(Detection(lo_s, hi_s, float(probs[widx])))
                            intervals[rec_id] = aggregate(dets, pcfg, n_bins,
                                                          store.time_bins_per_s)
                        row = evaluate_intervals(store, intervals, ids, event_filter=flt)
                        cells.setdefault(key, []).append(row)
                    except BowelDetError as exc:
                        errors[key] = str(exc)

    out = _out_dir(cfg)
    header = ("threshold,overlap,vote_fraction,n_seeds,"
              + ",".join(METRIC_COLUMNS) + ",error")
    lines = [f"# config_hash={cfg.config_hash()}", header]
    for threshold in thresholds:
        for overlap in overlaps:
            for vote_fraction in vote_fractions:
                key = (threshold, overlap, vote_fraction)
                rows = cells.get(key, [])
                if key in errors or not rows:
                    msg = errors.get(key, "no results")
                    lines.append(f"{threshold},{overlap},{vote_fraction},0,"
                                 + ",".join([""] * len(METRIC_COLUMNS)) + f",{msg}")
                    continue
                mean = {c: float(np.mean([r[c] for r in rows])) for c in METRIC_COLUMNS}
                lines.append(f"{threshold},{overlap},{vote_fraction},{len(rows)},"
                             + ",".join(f"{mean[c]:.6f}" for c in METRIC_COLUMNS) + ",")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    print(f"swept {len(thresholds) * len(overlaps) * len(vote_fractions)} cells "
          f"x {len(seeds)} seeds -> {out / 'sweep.csv'}")
    return 0


# ------------------------------------------------------------- dataset-stats

def cmd_dataset_stats(args) -> int:
    cfg = _load_config(args)
    store = open_store(cfg.data("store_dir"))
    tcfg = cfg.train_config()
    kinds = tuple(EventKind(k) for k in tcfg.filter_kinds)
    by_kind: dict = {}
    durations = []
    total_events = 0
    kept = 0
    for rec_id in store.ids():
        events = store.events(rec_id)
        total_events += len(events)
        kept += len(filter_events(events, tcfg.filter_max_duration_s, kinds))
        for e in events:
            by_kind[e.kind.value] = by_kind.get(e.kind.value, 0) + 1
            durations.append(e.duration_s)
    print(f"recordings: {len(store.ids())}")
    print(f"events: {total_events}")
    for kind in sorted(by_kind):
        print(f"  {kind}: {by_kind[kind]}")
    print(f"retained by filter (kinds={list(tcfg.filter_kinds)}, "
          f"max {tcfg.filter_max_duration_s}s): {kept}")
    if durations:
        print(f"event duration: mean {np.mean(durations):.4f}s, "
              f"median {np.median(durations):.4f}s, max {np.max(durations):.4f}s")
    return 0


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boweldet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="training seed override")
        p.add_argument("--threshold", type=float, help="detection threshold override")
        p.add_argument("--vote-fraction", dest="vote_fraction", type=float,
                       help="vote fraction override")
        p.add_argument("--overlap", type=int, help="window overlap override")

    p = sub.add_parser("preprocess", help="decode, filter and merge spectrograms")
    common(p)
    p.add_argument("--audio-dir", help="directory of WAV + annotation files")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the detector networks")
    common(p)
    p.add_argument("--which", choices=["classifier", "regressor", "both"], default="both")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="detect intervals on a split")
    common(p)
    p.add_argument("--part", choices=["train", "valid", "test", "all"], default="test")
    p.add_argument("--recordings", help="comma-separated recording ids")
    p.add_argument("--classifier", help="classifier weight file")
    p.add_argument("--regressor", help="regressor weight file")
    p.add_argument("--meta", choices=["intersect", "sum"],
                   help="combine with --external-intervals")
    p.add_argument("--external-intervals", dest="external_intervals",
                   help="interval CSV from another detector")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score an interval CSV against ground truth")
    common(p)
    p.add_argument("--predictions", required=True, help="intervals CSV to score")
    p.add_argument("--part", choices=["train", "valid", "test", "all"], default="test")
    p.add_argument("--force", action="store_true", help="allow mixed config hashes")
    p.add_argument("--no-filter", dest="no_filter", action="store_true",
                   help="evaluate against unfiltered annotations")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="grid over prediction parameters, averaged over seeds")
    common(p)
    p.add_argument("--part", choices=["train", "valid", "test", "all"], default="test")
    p.add_argument("--seeds", help="comma-separated training seeds (overrides config)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dataset-stats", help="summarize the preprocessed corpus")
    common(p)
    p.set_defaults(func=cmd_dataset_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except BowelDetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Shared test utilities: finite-difference gradient checks, brute-force
oracles, and in-memory store construction."""

import numpy as np

from boweldet.dataset import SoundEvent
from boweldet.store import SpectrogramStore, StoreEntry


def to_float64(net):
    for p in net.params():
        p.value = p.value.astype(np.float64)
        p.grad = np.zeros_like(p.value)


def fd_gradcheck(net, x, loss_fn, dropout_seed=0, h=1e-3, tol=1e-3):
    """Max relative error between analytic and central-difference gradients
    over every parameter of ``net``. Dropout draws are replayed identically
    by reseeding the rng for each forward.

    A coordinate whose central difference straddles a kink (relu, pooling
    argmax, IoU breakpoints) is retried with smaller step sizes; a genuine
    gradient bug stays wrong at every h, a kink crossing resolves."""
    rng = lambda: np.random.default_rng(dropout_seed)  # noqa: E731
    out = net.forward(x, train=True, rng=rng())
    _, dy = loss_fn(out)
    net.zero_grads()
    net.backward(dy)

    def rel_err_at(flat, i, keep, step, g):
        flat[i] = keep + step
        lp, _ = loss_fn(net.forward(x, train=True, rng=rng()))
        flat[i] = keep - step
        lm, _ = loss_fn(net.forward(x, train=True, rng=rng()))
        flat[i] = keep
        fd = (lp - lm) / (2.0 * step)
        return abs(fd - g) / max(abs(fd), abs(g), 1e-8)

    worst = 0.0
    for p in net.params():
        flat = p.value.ravel()
        grad = p.grad.ravel()
        for i in range(flat.size):
            keep = flat[i]
            err = rel_err_at(flat, i, keep, h, grad[i])
            if err >= tol:
                err = min(err, rel_err_at(flat, i, keep, h / 8.0, grad[i]))
            if err >= tol:
                err = min(err, rel_err_at(flat, i, keep, h / 64.0, grad[i]))
            worst = max(worst, err)
    return worst


def brute_force_label(window_start_s, window_s, events):
    """Independent reimplementation of the window labeling rule."""
    w_lo, w_hi = window_start_s, window_start_s + window_s
    qualifying = []
    for e in events:
        overlap = min(e.end_s, w_hi) - max(e.start_s, w_lo)
        if overlap > 0 and overlap >= 0.5 * (e.end_s - e.start_s):
            qualifying.append((overlap, e.start_s, e))
    if not qualifying:
        return None
    qualifying.sort(key=lambda t: (-t[0], t[1]))
    e = qualifying[0][2]
    center = 0.5 * (e.start_s + e.end_s)
    offset = (center - (window_start_s + 0.5 * window_s)) / window_s
    offset = max(-0.5, min(0.5, offset))
    scale = min((e.end_s - e.start_s) / window_s, 1.0)
    return offset, scale


def brute_force_votes(detections, n_bins, bins_per_s):
    """Pure-python per-bin accumulation oracle."""
    acc = [0.0] * n_bins
    for t in range(n_bins):
        center = (t + 0.5) / bins_per_s
        for d in detections:
            if d.start_s <= center < d.end_s:
                acc[t] += d.confidence
    return np.array(acc)


def brute_force_confusion(pred_mask, gt_mask):
    tp = fp = tn = fn = 0
    for p, g in zip(pred_mask, gt_mask):
        if p and g:
            tp += 1
        elif p and not g:
            fp += 1
        elif not p and g:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def brute_force_avg_iou(pred_intervals, events):
    if not events:
        return 0.0
    total = 0.0
    for e in events:
        best = 0.0
        for a, b in pred_intervals:
            inter = min(b, e.end_s) - max(a, e.start_s)
            if inter > 0:
                union = (b - a) + (e.end_s - e.start_s) - inter
                best = max(best, inter / union)
        total += best
    return total / len(events)


def memory_store(recordings, time_bins_per_s=630, config_hash="testhash"):
    """Build a SpectrogramStore from {id: (values array, events)} without disk."""
    entries = []
    chunks = []
    offset = 0
    for rec_id, (values, events) in recordings.items():
        values = np.asarray(values, dtype=np.float32)
        entries.append(StoreEntry(
            recording_id=rec_id, row_offset=offset, rows=values.shape[0],
            duration_s=values.shape[0] / time_bins_per_s, events=list(events),
        ))
        chunks.append(values)
        offset += values.shape[0]
    data = np.concatenate(chunks) if chunks else np.zeros((0, 1), np.float32)
    return SpectrogramStore(data=data, entries=entries,
                            time_bins_per_s=time_bins_per_s, config_hash=config_hash)


def random_events(rng, n, t_max=2.0, d_range=(0.01, 0.2)):
    events = []
    for _ in range(n):
        d = rng.uniform(*d_range)
        start = rng.uniform(0, t_max - d)
        events.append(SoundEvent(start, start + d))
    return events

"""Training losses: weighted BCE for the window classifier, interval-IoU
with distance/scale penalties for the regressor (plus a plain-MSE variant).

Every loss returns (scalar loss, gradient w.r.t. the prediction array);
losses are means over the batch and accumulate in float64.
"""

import numpy as np

PROB_EPS = 1e-7


def weighted_bce(pred, label, w_pos: float = 1.0):
    """-[w_pos*y*log(p) + (1-y)*log(1-p)], averaged over the batch.

    ``pred`` holds probabilities (any shape); ``label`` is 0/1 of the same
    shape. Predictions are clamped to [1e-7, 1-1e-7].
    """
    pred = np.asarray(pred)
    y = np.asarray(label, dtype=np.float64).reshape(pred.shape)
    p = np.clip(pred.astype(np.float64), PROB_EPS, 1.0 - PROB_EPS)
    n = p.size
    loss = -(w_pos * y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum() / n
    dp = ((1.0 - y) / (1.0 - p) - w_pos * y / p) / n
    return float(loss), dp.astype(pred.dtype).reshape(pred.shape)


def interval_iou(a, b):
    """IoU of 1-D intervals given as (center, length); 0 when disjoint.

    Works elementwise on arrays of shape (..., 2).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a_lo, a_hi = a[..., 0] - 0.5 * a[..., 1], a[..., 0] + 0.5 * a[..., 1]
    b_lo, b_hi = b[..., 0] - 0.5 * b[..., 1], b[..., 0] + 0.5 * b[..., 1]
    inter = np.maximum(0.0, np.minimum(a_hi, b_hi) - np.maximum(a_lo, b_lo))
    union = a[..., 1] + b[..., 1] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def regression_loss(pred, target, alpha: float = 1.0, beta: float = 1.0):
    """(1 - IoU) + alpha*|d_offset| + beta*|d_scale|, batch mean.

    ``pred`` and ``target`` are (N, 2) arrays of (offset, scale) in window
    units. Subgradients at the |.| kinks and at IoU breakpoints are 0.
    """
    pred = np.asarray(pred)
    t = np.asarray(target, dtype=np.float64)
    p = pred.astype(np.float64)
    n = p.shape[0]
    o_p, s_p = p[:, 0], p[:, 1]
    o_t, s_t = t[:, 0], t[:, 1]
    a_lo, a_hi = o_p - 0.5 * s_p, o_p + 0.5 * s_p
    b_lo, b_hi = o_t - 0.5 * s_t, o_t + 0.5 * s_t
    inter = np.minimum(a_hi, b_hi) - np.maximum(a_lo, b_lo)
    overlap = inter > 0
    inter = np.maximum(inter, 0.0)
    union = s_p + s_t - inter
    iou = np.where(overlap, inter / np.where(union > 0, union, 1.0), 0.0)
    do = o_p - o_t
    ds = s_p - s_t
    loss = ((1.0 - iou) + alpha * np.abs(do) + beta * np.abs(ds)).sum() / n

    # d(inter)/d(o_p), d(inter)/d(s_p) on the overlapping branch
    hi_active = (a_hi < b_hi).astype(np.float64)   # min picks the pred edge
    lo_active = (a_lo > b_lo).astype(np.float64)   # max picks the pred edge
    di_do = (hi_active - lo_active) * overlap
    di_ds = 0.5 * (hi_active + lo_active) * overlap
    du_do = -di_do
    du_ds = 1.0 - di_ds
    denom = np.where(union > 0, union, 1.0) ** 2
    # exactly matching intervals sit on a kink of the IoU surface; use the
    # zero subgradient there so a perfect prediction is a fixed point
    matched = (a_lo == b_lo) & (a_hi == b_hi)
    diou_do = np.where(overlap & ~matched, (di_do * union - inter * du_do) / denom, 0.0)
    diou_ds = np.where(overlap & ~matched, (di_ds * union - inter * du_ds) / denom, 0.0)

    grad = np.empty_like(p)
    grad[:, 0] = (-diou_do + alpha * np.sign(do)) / n
    grad[:, 1] = (-diou_ds + beta * np.sign(ds)) / n
    return float(loss), grad.astype(pred.dtype)


def mse_regression_loss(pred, target):
    """Plain mean squared error over (offset, scale) pairs."""
    pred = np.asarray(pred)
    t = np.asarray(target, dtype=np.float64)
    p = pred.astype(np.float64)
    diff = p - t
    loss = (diff ** 2).sum() / p.shape[0]
    grad = (2.0 * diff / p.shape[0]).astype(pred.dtype)
    return float(loss), grad

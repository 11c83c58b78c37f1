"""Reconstruction-error scoring, thresholds, point-adjust and P/R/F1."""
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import window_array
from .nn import ShapeError


@dataclass
class ScoreSeries:
    scores: np.ndarray
    threshold: float = None
    predictions: np.ndarray = None

    def with_threshold(self, c):
        return ScoreSeries(self.scores, float(c), (self.scores > c).astype(np.int64))


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    threshold: float
    adjusted: bool

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def score_window(X, X_hat):
    X, X_hat = np.asarray(X), np.asarray(X_hat)
    if X.shape != X_hat.shape:
        raise ShapeError(f"{X.shape} vs {X_hat.shape}")
    d = X_hat - X
    return (d * d).sum(axis=-2)


def reconstruct_windows(model, windows, adj=None, batch=512):
    adj = model.adjacency() if adj is None else adj
    out = np.empty_like(windows)
    for i in range(0, len(windows), batch):
        out[i:i + batch] = model.reconstruct(windows[i:i + batch], adj)
    return out


def score_series(values, model, adj=None, channel_errors=False):
    """Score every step of a normalized (N, T) series with its last-point window score.

    Steps before the first full window take the first window's interior columns.
    With ``channel_errors`` the per-channel squared errors (N, T) are returned too.
    """
    values = np.asarray(values, dtype=np.float64)
    l = model.vae_cfg.window_len
    T = values.shape[1]
    if T < l:
        raise ValueError(f"series of {T} steps is shorter than the window length {l}")
    windows = window_array(values, l)
    sq = (reconstruct_windows(model, windows, adj) - windows) ** 2  # (W, N, l)
    per_channel = np.empty((values.shape[0], T))
    per_channel[:, :l] = sq[0]
    per_channel[:, l:] = sq[1:, :, -1].T
    scores = per_channel.sum(axis=0)
    if channel_errors:
        return ScoreSeries(scores), per_channel
    return ScoreSeries(scores)


def segments(labels):
    """Maximal runs of 1s as half-open ``(start, stop)`` pairs."""
    lab = np.asarray(labels, dtype=np.int64)
    padded = np.concatenate(([0], lab, [0]))
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def point_adjust(labels, predictions):
    labels = np.asarray(labels, dtype=np.int64)
    pred = np.asarray(predictions, dtype=np.int64).copy()
    if labels.shape != pred.shape:
        raise ValueError(f"labels length {labels.size} != predictions length {pred.size}")
    for a, b in segments(labels):
        if pred[a:b].any():
            pred[a:b] = 1
    return pred


def prf(labels, predictions):
    labels = np.asarray(labels, dtype=bool)
    pred = np.asarray(predictions, dtype=bool)
    tp = int(np.sum(labels & pred))
    fp = int(np.sum(~labels & pred))
    fn = int(np.sum(labels & ~pred))
    return f1_from_counts(tp, fp, fn)


def f1_from_counts(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def evaluate(labels, scores, threshold, adjust=True):
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ValueError(f"labels length {labels.size} != scores length {scores.size}")
    pred = (scores > threshold).astype(np.int64)
    if adjust:
        pred = point_adjust(labels, pred)
    p, r, f = prf(labels, pred)
    return EvalReport(p, r, f, float(threshold), bool(adjust))


def candidate_thresholds(scores):
    """One representative per distinct prediction set, ascending.

    Below the minimum (flag everything), midpoints between consecutive
    distinct scores, and above the maximum (flag nothing).
    """
    u = np.unique(scores)
    lo, hi = u[0] - 1.0, u[-1] + 1.0
    return np.concatenate(([lo], (u[:-1] + u[1:]) / 2.0, [hi])) if u.size > 1 else np.array([lo, hi])


def best_f1_threshold(labels, scores, adjust=True):
    """Sweep every distinct prediction set; ties go to the higher threshold.

    Runs in O(T log T): an adjusted segment counts as detected exactly when
    its maximum score exceeds the threshold.
    """
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ValueError(f"labels length {labels.size} != scores length {scores.size}")
    if not labels.any():
        raise ValueError("best-F1 threshold needs at least one positive label")
    cands = candidate_thresholds(scores)
    normal = np.sort(scores[labels == 0])
    fp = normal.size - np.searchsorted(normal, cands, side="right")
    if adjust:
        segs = segments(labels)
        seg_max = np.array([scores[a:b].max() for a, b in segs])
        seg_len = np.array([b - a for a, b in segs])
        order = np.argsort(seg_max)
        seg_max, seg_len = seg_max[order], seg_len[order]
        tail = np.concatenate((np.cumsum(seg_len[::-1])[::-1], [0]))
        tp = tail[np.searchsorted(seg_max, cands, side="right")]
    else:
        pos = np.sort(scores[labels == 1])
        tp = pos.size - np.searchsorted(pos, cands, side="right")
    n_pos = int(labels.sum())
    fn = n_pos - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
        r = tp / n_pos
        f = np.where(p + r > 0, 2 * p * r / np.where(p + r > 0, p + r, 1.0), 0.0)
    best = np.flatnonzero(f == f.max())[-1]
    c = float(cands[best])
    return c, evaluate(labels, scores, c, adjust)


def write_scores_csv(path, series):
    pred = series.predictions
    lines = ["step,score,prediction"]
    for t, s in enumerate(series.scores):
        lines.append(f"{t},{float(s)!r},{'' if pred is None else int(pred[t])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_scores_csv(path):
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0].strip() != "step,score,prediction":
        raise ValueError(f"{path}: missing 'step,score,prediction' header")
    scores, preds = [], []
    for line in rows[1:]:
        if not line.strip():
            continue
        _, s, p = line.split(",")
        scores.append(float(s))
        preds.append(int(p) if p else None)
    pred = None if any(p is None for p in preds) else np.array(preds, dtype=np.int64)
    return np.array(scores), pred


def write_channel_errors_csv(path, per_channel):
    lines = ["step," + ",".join(f"ch{i}" for i in range(per_channel.shape[0]))]
    for t, col in enumerate(per_channel.T):
        lines.append(f"{t}," + ",".join(repr(float(v)) for v in col))
    Path(path).write_text("\n".join(lines) + "\n")

"""Score postprocessing and auxiliary evaluation: per-class running-median
smoothing, onset F-measure with a configurable tolerance, and the almost-
stochastic-order significance test with Bonferroni correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ContractError, ValidationError
from .timeline import Event, ScoreMatrix


@dataclass(frozen=True)
class OnsetEvalConfig:
    """Onset matching tolerance in seconds."""

    tolerance: float = 0.05

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValidationError(f"tolerance must be positive: {self.tolerance}")


@dataclass(frozen=True)
class OnsetFScores:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class AsoConfig:
    """Confidence level, Bonferroni divisor, and bootstrap settings."""

    alpha: float = 0.05
    num_comparisons: int = 1
    bootstrap_samples: int = 1000
    rng_seed: int = 0
    decision_threshold: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must be in (0, 1): {self.alpha}")
        if self.num_comparisons < 1:
            raise ValidationError(
                f"num_comparisons must be >= 1: {self.num_comparisons}"
            )
        if not 0.0 < self.alpha / self.num_comparisons < 1.0:
            raise ValidationError("effective alpha must stay in (0, 1)")
        if self.bootstrap_samples < 1:
            raise ValidationError("bootstrap_samples must be positive")


@dataclass(frozen=True)
class AsoResult:
    epsilon_min: float
    epsilon_hat: float
    significant: bool


def median_window_frames(window_seconds: float, resolution: float) -> int:
    """Window length in frames, rounded to the nearest count and then up to
    the next odd number so the median is unambiguous (0.48 s at 40 ms -> 13).
    """
    if not window_seconds > 0:
        raise ContractError(f"window must be positive: {window_seconds}")
    w = int(round(window_seconds / resolution))
    w = max(w, 1)
    if w % 2 == 0:
        w += 1
    return w


def median_filter(scores: ScoreMatrix, window_seconds: float) -> ScoreMatrix:
    """Per-class 1-D running median over frames, shared window across classes.

    Edges shrink the window symmetrically, so every median is taken over an
    odd count and outputs are a subset of the input values. A window longer
    than the clip degenerates to the whole-clip (lower) median per class.
    """
    w = median_window_frames(window_seconds, scores.grid.resolution)
    t = scores.num_frames
    vals = scores.scores
    if w >= 2 * t - 1:
        # Lower median keeps outputs within the input value set for even t.
        idx = (t - 1) // 2
        med = np.sort(vals, axis=0)[idx]
        out = np.broadcast_to(med, vals.shape).copy()
        return ScoreMatrix(scores.grid, scores.vocabulary, out, scores.is_logits)
    half = w // 2
    out = np.empty_like(vals)
    if t > 2 * half:
        windows = np.lib.stride_tricks.sliding_window_view(vals, w, axis=0)
        out[half:t - half] = np.median(windows, axis=-1)
    for i in range(min(half, t)):
        h = min(i, t - 1 - i, half)
        out[i] = np.median(vals[i - h:i + h + 1], axis=0)
        j = t - 1 - i
        h = min(j, t - 1 - j, half)
        out[j] = np.median(vals[j - h:j + h + 1], axis=0)
    return ScoreMatrix(scores.grid, scores.vocabulary, out, scores.is_logits)


def _greedy_onset_matches(pred, gt, tolerance: float) -> int:
    """Number of matches: each ground truth, in onset order, takes the
    earliest unmatched prediction within the tolerance."""
    preds = sorted(pred, key=lambda e: (e.onset, e.offset))
    gts = sorted(gt, key=lambda e: (e.onset, e.offset))
    used = [False] * len(preds)
    matched = 0
    for g in gts:
        for j, p in enumerate(preds):
            if used[j]:
                continue
            if abs(p.onset - g.onset) <= tolerance:
                used[j] = True
                matched += 1
                break
    return matched


def onset_f(pred: dict[str, list[Event]], gt: dict[str, list[Event]],
            cfg: OnsetEvalConfig = OnsetEvalConfig()) -> OnsetFScores:
    """Micro-averaged onset precision/recall/F1 over clips and classes.

    ``pred`` and ``gt`` map clip id to that clip's events (class ids inside
    the events must refer to one shared vocabulary).
    """
    tp = fp = fn = 0
    clips = set(pred) | set(gt)
    for clip in sorted(clips):
        p_events = pred.get(clip, [])
        g_events = gt.get(clip, [])
        classes = {e.class_id for e in p_events} | {e.class_id for e in g_events}
        for c in sorted(classes):
            p_c = [e for e in p_events if e.class_id == c]
            g_c = [e for e in g_events if e.class_id == c]
            m = _greedy_onset_matches(p_c, g_c, cfg.tolerance)
            tp += m
            fp += len(p_c) - m
            fn += len(g_c) - m
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return OnsetFScores(precision, recall, f1, tp, fp, fn)


def _quantile_segments(n: int, m: int):
    """Exact segmentation of [0, 1) where both empirical quantile functions
    are constant, in integer units of 1/(n*m).

    Returns (segment start positions, segment lengths, index into the sorted
    a-sample, index into the sorted b-sample).
    """
    cuts = np.union1d(np.arange(n + 1) * m, np.arange(m + 1) * n)
    starts = cuts[:-1]
    lengths = (cuts[1:] - starts) / float(n * m)
    ia = starts // m
    ib = starts // n
    return lengths, ia, ib


def violation_ratio(a, b) -> float:
    """Stochastic-dominance violation ratio of sample ``a`` over sample ``b``.

    Integrates the squared positive part of Q_b - Q_a over [0, 1] and divides
    by the squared L2 distance of the quantile functions; 0.5 by convention
    when the two quantile functions coincide.
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if len(a) < 2 or len(b) < 2:
        raise ValidationError("both samples need at least 2 values")
    lengths, ia, ib = _quantile_segments(len(a), len(b))
    diff = b[ib] - a[ia]
    denom = float(np.sum(diff * diff * lengths))
    if denom == 0.0:
        return 0.5
    viol = np.maximum(diff, 0.0)
    return float(np.sum(viol * viol * lengths)) / denom


def aso(scores_a, scores_b, cfg: AsoConfig = AsoConfig()) -> AsoResult:
    """Almost-stochastic-order test of "a better than b".

    epsilon_min is the one-sided (1 - alpha/num_comparisons) upper confidence
    bound of the violation ratio under a normal approximation of its bootstrap
    distribution (resampling both samples with replacement), clamped to
    [0, 1]. The comparison is declared significant when epsilon_min falls
    below the decision threshold.
    """
    a = np.sort(np.asarray(scores_a, dtype=np.float64))
    b = np.sort(np.asarray(scores_b, dtype=np.float64))
    if len(a) < 2 or len(b) < 2:
        raise ValidationError("both samples need at least 2 values")
    eps_hat = violation_ratio(a, b)

    rng = np.random.default_rng(cfg.rng_seed)
    n, m = len(a), len(b)
    iters = cfg.bootstrap_samples
    res_a = np.sort(a[rng.integers(0, n, size=(iters, n))], axis=1)
    res_b = np.sort(b[rng.integers(0, m, size=(iters, m))], axis=1)
    lengths, ia, ib = _quantile_segments(n, m)
    diff = res_b[:, ib] - res_a[:, ia]
    denom = np.sum(diff * diff * lengths, axis=1)
    viol = np.maximum(diff, 0.0)
    num = np.sum(viol * viol * lengths, axis=1)
    eps_boot = np.where(denom == 0.0, 0.5, num / np.where(denom == 0.0, 1.0, denom))
    sigma = float(np.std(eps_boot, ddof=1))

    alpha_eff = cfg.alpha / cfg.num_comparisons
    z = float(norm.ppf(1.0 - alpha_eff))
    eps_min = min(max(eps_hat + z * sigma, 0.0), 1.0)
    return AsoResult(eps_min, eps_hat, eps_min < cfg.decision_threshold)

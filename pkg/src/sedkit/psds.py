"""Exact threshold-independent detection scoring with intersection-based
matching and effective-FP-rate normalization.

Detections for a clip change only at that clip's own distinct score values,
so each clip contributes a piecewise-constant (TP, FP) step function of the
threshold. The engine computes those step functions exactly and merges them
across the dataset instead of re-decoding every clip at every global
threshold:

* clips that carry reference events for the class are swept incrementally,
  activating frames from the highest score downwards; every activation
  creates or merges runs, so run updates are linear in the frame count, and
  per-reference matched overlap is recomputed fresh on each change so the
  arithmetic is identical to a from-scratch evaluation;
* clips without reference events can only produce false positives, and the
  number of detections at a threshold is a pure counting problem solved with
  two sorted arrays (a run starts at frame t exactly when the threshold lies
  in (score[t-1], score[t]]).

The ROC per class is the non-dominated upper staircase of the resulting
operating points; the final score integrates the across-class effective TPR
over the FP-rate axis up to ``e_max`` and normalizes by ``e_max``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ValidationError
from .evalaux import median_filter
from .timeline import ClipAnnotations, ClassVocabulary, ScoreMatrix


@dataclass(frozen=True)
class PsdsParams:
    """Intersection-criterion thresholds and integration limits.

    ``missing_gt`` controls classes with no reference events in the dataset:
    "tpr_one" scores them as perfectly recalled at every operating point,
    "exclude" drops them from the across-class aggregation. Cross-trigger
    scoring is deliberately not modelled.
    """

    rho_dtc: float = 0.7
    rho_gtc: float = 0.7
    alpha_st: float = 0.0
    e_max: float = 100.0
    missing_gt: str = "tpr_one"

    def __post_init__(self):
        if not 0.0 < self.rho_dtc <= 1.0:
            raise ValidationError(f"rho_dtc must be in (0, 1]: {self.rho_dtc}")
        if not 0.0 < self.rho_gtc <= 1.0:
            raise ValidationError(f"rho_gtc must be in (0, 1]: {self.rho_gtc}")
        if self.alpha_st < 0:
            raise ValidationError(f"alpha_st must be >= 0: {self.alpha_st}")
        if not self.e_max > 0:
            raise ValidationError(f"e_max must be positive: {self.e_max}")
        if self.missing_gt not in ("tpr_one", "exclude"):
            raise ValidationError(f"unknown missing_gt policy: {self.missing_gt!r}")


@dataclass(frozen=True)
class OperatingPoint:
    """One achievable (TPR, eFPR) point of a class, with its threshold."""

    threshold: float
    tpr: float
    efpr: float


@dataclass(frozen=True, eq=False)
class PsdsResult:
    psds: float
    curves: dict[str, list[tuple[float, float]]]
    dataset_duration_hours: float
    params: PsdsParams


def _interval(ev) -> tuple[float, float]:
    if hasattr(ev, "onset"):
        return float(ev.onset), float(ev.offset)
    on, off = ev
    return float(on), float(off)


def intersection_match(detections, ground_truths, rho_dtc: float,
                       rho_gtc: float) -> tuple[int, int]:
    """Count (TP, FP) for one clip and class under the intersection criteria.

    A detection is valid when its summed overlap with the references covers at
    least ``rho_dtc`` of its own length; invalid detections are false
    positives. A reference counts as detected when valid detections cover at
    least ``rho_gtc`` of it.
    """
    dets = sorted(_interval(d) for d in detections)
    gts = sorted(_interval(g) for g in ground_truths)
    valid = []
    fp = 0
    for don, doff in dets:
        if not doff > don:
            raise ContractError(f"zero-length detection [{don}, {doff})")
        inter = 0.0
        for gon, goff in gts:
            ov = min(doff, goff) - max(don, gon)
            if ov > 0.0:
                inter += ov
        if (inter / (doff - don)) >= rho_dtc:
            valid.append((don, doff))
        else:
            fp += 1
    tp = 0
    for gon, goff in gts:
        covered = 0.0
        for don, doff in valid:
            ov = min(doff, goff) - max(don, gon)
            if ov > 0.0:
                covered += ov
        if (covered / (goff - gon)) >= rho_gtc:
            tp += 1
    return tp, fp


def change_point_thresholds(scores, class_ref) -> np.ndarray:
    """Sorted distinct values of one class's scores across all clips.

    Thresholded detections are constant between consecutive values, so this
    set indexes every achievable operating point of the class.
    """
    cols = []
    for cid in sorted(scores):
        sm = scores[cid]
        c = sm.vocabulary.index(class_ref) if isinstance(class_ref, str) else int(class_ref)
        cols.append(sm.scores[:, c])
    if not cols:
        raise ValidationError("change points need a non-empty dataset")
    return np.unique(np.concatenate(cols))


def _clip_counts_with_gt(col, gts, resolution, rho_dtc, rho_gtc):
    """(TP, FP) of one clip at each of its distinct score values, descending.

    ``gts`` must be sorted by (onset, offset); overlap sums iterate references
    in that order so the floating-point arithmetic matches a naive rescoring.
    """
    t_frames = len(col)
    order = np.argsort(col, kind="stable")
    gon = [g[0] for g in gts]
    goff = [g[1] for g in gts]
    glen = [g[1] - g[0] for g in gts]
    n_gt = len(gts)

    active = bytearray(t_frames)
    left = list(range(t_frames))
    right = list(range(t_frames))
    run_hi: dict[int, int] = {}
    run_valid: dict[int, bool] = {}
    run_touch: dict[int, list[int]] = {}
    gt_runs: list[set[int]] = [set() for _ in range(n_gt)]
    gt_is_tp = [False] * n_gt
    tp = 0
    fp = 0
    out_v: list[float] = []
    out_tp: list[int] = []
    out_fp: list[int] = []

    def drop_run(lo: int, touched: set[int]) -> None:
        nonlocal fp
        was_valid = run_valid.pop(lo)
        run_hi.pop(lo)
        for gi in run_touch.pop(lo):
            gt_runs[gi].discard(lo)
            touched.add(gi)
        if not was_valid:
            fp -= 1

    pos = t_frames - 1
    while pos >= 0:
        v = col[order[pos]]
        batch_end = pos
        while batch_end >= 0 and col[order[batch_end]] == v:
            batch_end -= 1
        touched: set[int] = set()
        for k in range(pos, batch_end, -1):
            i = int(order[k])
            lo = hi = i
            if i > 0 and active[i - 1]:
                lo = left[i - 1]
                drop_run(lo, touched)
            if i + 1 < t_frames and active[i + 1]:
                hi = right[i + 1]
                drop_run(i + 1, touched)
            active[i] = 1
            left[hi] = lo
            right[lo] = hi
            a = lo * resolution
            b = (hi + 1) * resolution
            inter = 0.0
            touch: list[int] = []
            for gi in range(n_gt):
                if gon[gi] < b and goff[gi] > a:
                    ov = min(b, goff[gi]) - max(a, gon[gi])
                    if ov > 0.0:
                        inter += ov
                        touch.append(gi)
            valid = (inter / (b - a)) >= rho_dtc
            run_hi[lo] = hi
            run_valid[lo] = valid
            run_touch[lo] = touch
            for gi in touch:
                gt_runs[gi].add(lo)
                touched.add(gi)
            if not valid:
                fp += 1
        for gi in touched:
            covered = 0.0
            for lo in sorted(gt_runs[gi]):
                if run_valid[lo]:
                    a = lo * resolution
                    b = (run_hi[lo] + 1) * resolution
                    ov = min(b, goff[gi]) - max(a, gon[gi])
                    if ov > 0.0:
                        covered += ov
            now = (covered / glen[gi]) >= rho_gtc
            if now != gt_is_tp[gi]:
                tp += 1 if now else -1
                gt_is_tp[gi] = now
        out_v.append(float(v))
        out_tp.append(tp)
        out_fp.append(fp)
        pos = batch_end
    return (np.array(out_v), np.array(out_tp, dtype=np.int64),
            np.array(out_fp, dtype=np.int64))


def _run_start_breakpoints(cols):
    """Sorted arrays (a, b) such that the number of detections at threshold v
    is #{a >= v} - #{b >= v}: a run starts at frame t iff v in (s[t-1], s[t]]."""
    a_parts = []
    b_parts = []
    for col in cols:
        prev = np.empty_like(col)
        prev[0] = -np.inf
        prev[1:] = col[:-1]
        mask = prev < col
        a_parts.append(col[mask])
        b_parts.append(prev[mask])
    if not a_parts:
        return np.empty(0), np.empty(0)
    return np.sort(np.concatenate(a_parts)), np.sort(np.concatenate(b_parts))


def _fp_curve_no_gt(cols, query) -> np.ndarray:
    """Total detection count (all false positives) at each query threshold,
    summed over clips without reference events."""
    a, b = _run_start_breakpoints(cols)
    if len(a) == 0:
        return np.zeros(len(query), dtype=np.int64)
    ca = len(a) - np.searchsorted(a, query, side="left")
    cb = len(b) - np.searchsorted(b, query, side="left")
    return (ca - cb).astype(np.int64)


def _clip_deltas(col, gts, resolution, rho_dtc, rho_gtc):
    """One clip's (TP, FP) step-function deltas over descending thresholds,
    with zero-change rows dropped."""
    cv, ctp, cfp = _clip_counts_with_gt(col, gts, resolution, rho_dtc, rho_gtc)
    dtp = np.diff(ctp, prepend=0)
    dfp = np.diff(cfp, prepend=0)
    keep = (dtp != 0) | (dfp != 0)
    return cv[keep], dtp[keep], dfp[keep]


def _clip_deltas_task(args):
    return _clip_deltas(*args)


def _class_curve(with_gt, no_gt_cols, resolution, rho_dtc, rho_gtc, deltas=None):
    """Dataset (thresholds desc, TP, FP) for one class at every change point.

    ``with_gt`` holds (scores column, sorted reference intervals) per clip
    that has reference events; ``no_gt_cols`` the remaining clips' columns.
    ``deltas`` can carry precomputed per-clip step deltas (from workers).
    """
    all_cols = [c for c, _ in with_gt] + list(no_gt_cols)
    if not all_cols:
        return np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64)
    v_desc = np.unique(np.concatenate(all_cols))[::-1]
    tp = np.zeros(len(v_desc), dtype=np.int64)
    fp = np.zeros(len(v_desc), dtype=np.int64)
    if deltas is None:
        deltas = [_clip_deltas(col, gts, resolution, rho_dtc, rho_gtc)
                  for col, gts in with_gt]
    dv_parts = [d[0] for d in deltas]
    if dv_parts:
        dv = np.concatenate(dv_parts)
        if len(dv):
            order = np.argsort(-dv, kind="stable")
            dv_sorted = dv[order]
            cum_tp = np.cumsum(np.concatenate([d[1] for d in deltas])[order])
            cum_fp = np.cumsum(np.concatenate([d[2] for d in deltas])[order])
            # rightmost delta with value >= each query threshold
            idx = np.searchsorted(-dv_sorted, -v_desc, side="right") - 1
            got = idx >= 0
            tp[got] = cum_tp[idx[got]]
            fp[got] = cum_fp[idx[got]]
    fp = fp + _fp_curve_no_gt(no_gt_cols, v_desc)
    return v_desc, tp, fp


def _staircase(efpr, tpr, thresholds=None):
    """Non-dominated upper staircase: keep, in eFPR order, only points that
    strictly improve the best TPR seen so far."""
    order = np.lexsort((-tpr, efpr))
    ys = tpr[order]
    if len(ys) == 0:
        return np.empty(0), np.empty(0), np.empty(0)
    runmax = np.maximum.accumulate(ys)
    keep = np.empty(len(ys), dtype=bool)
    keep[0] = True
    keep[1:] = runmax[1:] > runmax[:-1]
    sel = order[keep]
    ths = thresholds[sel] if thresholds is not None else np.empty(0)
    return efpr[sel], tpr[sel], ths


def _prepare_dataset(scores, annotations):
    """Validate consistency and index the dataset by class."""
    clip_ids = sorted(scores)
    if not clip_ids:
        raise ValidationError("evaluation needs a non-empty score dataset")
    first = scores[clip_ids[0]]
    for cid in clip_ids:
        sm = scores[cid]
        if sm.is_logits:
            raise ContractError(f"clip {cid!r} holds logits; apply a sigmoid first")
        if sm.vocabulary.names != first.vocabulary.names:
            raise ContractError("all clips must share one vocabulary")
        if sm.grid.resolution != first.grid.resolution:
            raise ContractError("all clips must share one frame resolution")
    duration_hours = sum(
        (annotations[cid].duration if cid in annotations else scores[cid].grid.duration)
        for cid in clip_ids
    ) / 3600.0
    if not duration_hours > 0:
        raise ValidationError("dataset duration must be positive")
    return clip_ids, first.vocabulary, first.grid.resolution, duration_hours


def _class_inputs(scores, annotations, clip_ids, class_id, resolution):
    with_gt = []
    no_gt = []
    n_gt = 0
    for cid in clip_ids:
        col = np.ascontiguousarray(scores[cid].scores[:, class_id])
        ann = annotations.get(cid)
        gts = []
        if ann is not None:
            gts = sorted((ev.onset, ev.offset) for ev in ann.events
                         if ev.class_id == class_id)
        if gts:
            with_gt.append((col, gts))
            n_gt += len(gts)
        else:
            no_gt.append(col)
    return with_gt, no_gt, n_gt


def per_class_roc(scores, annotations, class_ref, params: PsdsParams = PsdsParams(),
                  median_filter_seconds: float | None = None) -> list[OperatingPoint]:
    """Operating points of one class at every change-point threshold, reduced
    to the non-dominated upper staircase. The point with no detections at all
    (threshold above every score) is always included."""
    clip_ids, vocab, resolution, duration_hours = _prepare_dataset(scores, annotations)
    if median_filter_seconds is not None:
        scores = {cid: median_filter(scores[cid], median_filter_seconds)
                  for cid in clip_ids}
    class_id = vocab.index(class_ref) if isinstance(class_ref, str) else int(class_ref)
    with_gt, no_gt, n_gt = _class_inputs(scores, annotations, clip_ids, class_id,
                                         resolution)
    v_desc, tp, fp = _class_curve(with_gt, no_gt, resolution,
                                  params.rho_dtc, params.rho_gtc)
    if n_gt > 0:
        tpr = tp / n_gt
        empty_tpr = 0.0
    else:
        tpr = np.ones_like(tp, dtype=np.float64)
        empty_tpr = 1.0
    efpr = fp / duration_hours
    thresholds = np.concatenate([v_desc, [math.inf]])
    tpr = np.concatenate([tpr, [empty_tpr]])
    efpr = np.concatenate([efpr, [0.0]])
    xs, ys, ths = _staircase(efpr, tpr, thresholds)
    return [OperatingPoint(float(t), float(y), float(x))
            for t, y, x in zip(ths, ys, xs)]


def psds(scores, annotations, params: PsdsParams = PsdsParams(),
         median_filter_seconds: float | None = None, threads: int = 1) -> PsdsResult:
    """Threshold-independent detection score over the whole dataset.

    ``scores`` maps clip id to a probability-valued score matrix and
    ``annotations`` maps clip id to its reference events (clips without an
    entry count as event-free, with duration taken from their grid). Class
    curves are independent, so ``threads`` > 1 distributes them over worker
    processes; results do not depend on the worker count.
    """
    clip_ids, vocab, resolution, duration_hours = _prepare_dataset(scores, annotations)
    for cid, ann in annotations.items():
        for ev in ann.events:
            if ev.class_id >= len(vocab):
                raise ValidationError(
                    f"clip {cid!r} references class id {ev.class_id} outside the vocabulary"
                )
    if median_filter_seconds is not None:
        scores = {cid: median_filter(scores[cid], median_filter_seconds)
                  for cid in clip_ids}

    class_inputs = []
    gt_counts = []
    sweep_jobs = []
    for c in range(len(vocab)):
        with_gt, no_gt, n_gt = _class_inputs(scores, annotations, clip_ids, c,
                                             resolution)
        gt_counts.append(n_gt)
        class_inputs.append((with_gt, no_gt))
        sweep_jobs.extend((col, gts, resolution, params.rho_dtc, params.rho_gtc)
                          for col, gts in with_gt)

    if threads is None or threads == 0:
        threads = os.cpu_count() or 1
    if threads > 1 and len(sweep_jobs) > 1:
        # Only the per-clip incremental sweeps go to workers; the vectorized
        # merge stays in the parent, so the result cannot depend on workers.
        chunk = max(1, len(sweep_jobs) // (threads * 8))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            deltas = list(pool.map(_clip_deltas_task, sweep_jobs, chunksize=chunk))
    else:
        deltas = [_clip_deltas(*job) for job in sweep_jobs]

    raw_curves = []
    cursor = 0
    for with_gt, no_gt in class_inputs:
        class_deltas = deltas[cursor:cursor + len(with_gt)]
        cursor += len(with_gt)
        raw_curves.append(_class_curve(with_gt, no_gt, resolution,
                                       params.rho_dtc, params.rho_gtc,
                                       deltas=class_deltas))

    stair_x: list[np.ndarray] = []
    stair_y: list[np.ndarray] = []
    curve_names: list[str] = []
    for c, (v_desc, tp, fp) in enumerate(raw_curves):
        n_gt = gt_counts[c]
        if n_gt == 0:
            if params.missing_gt == "exclude":
                continue
            xs = np.array([0.0])
            ys = np.array([1.0])
        else:
            tpr = np.concatenate([tp / n_gt, [0.0]])
            efpr = np.concatenate([fp / duration_hours, [0.0]])
            xs, ys, _ = _staircase(efpr, tpr)
        stair_x.append(xs)
        stair_y.append(ys)
        curve_names.append(vocab.names[c])
    if not stair_x:
        raise ValidationError("no class is left to aggregate (all excluded)")

    e_max = params.e_max
    support = np.unique(np.concatenate(
        [xs[xs < e_max] for xs in stair_x] + [np.array([0.0, e_max])]))
    seg_starts = support[:-1]
    tpr_rows = np.empty((len(stair_x), len(seg_starts)))
    for i, (xs, ys) in enumerate(zip(stair_x, stair_y)):
        idx = np.searchsorted(xs, seg_starts, side="right") - 1
        tpr_rows[i] = ys[idx]
    mean = tpr_rows.mean(axis=0)
    if params.alpha_st > 0:
        std = tpr_rows.std(axis=0)
        etpr = np.maximum(mean - params.alpha_st * std, 0.0)
    else:
        etpr = mean
    integral = float(np.dot(etpr, np.diff(support)))
    value = integral / e_max

    curves = {name: list(zip(map(float, xs), map(float, ys)))
              for name, xs, ys in zip(curve_names, stair_x, stair_y)}
    return PsdsResult(value, curves, duration_hours, params)

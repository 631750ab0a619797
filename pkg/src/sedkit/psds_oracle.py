"""Brute-force reference scorer: a dense threshold sweep with naive run
decoding and naive interval matching at every threshold.

Slow by construction and kept deliberately independent of the sweep engine in
:mod:`sedkit.psds`; the two must agree exactly, which the test suite checks on
randomized micro-datasets. Reference intervals are iterated in the same sorted
order as the engine so overlap sums are bitwise comparable, and the dataset
duration accumulates over clips in the same sorted-id order.
"""

from __future__ import annotations

import math
from bisect import bisect_right

import numpy as np

from .errors import ValidationError
from .evalaux import median_filter
from .psds import PsdsParams


def dense_thresholds(values: np.ndarray) -> np.ndarray:
    """All distinct score values, the midpoints between neighbours, one value
    below the minimum, and one above the maximum (the empty operating set)."""
    uniq = np.unique(np.asarray(values, dtype=np.float64))
    if len(uniq) == 0:
        raise ValidationError("no scores to sweep")
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    outer = np.array([uniq[0] - 0.5, uniq[-1] + 0.5])
    return np.unique(np.concatenate([uniq, mids, outer]))


def _decode_runs(col, thr, resolution):
    runs = []
    start = None
    for t, v in enumerate(col):
        if v >= thr:
            if start is None:
                start = t
        elif start is not None:
            runs.append((start * resolution, t * resolution))
            start = None
    if start is not None:
        runs.append((start * resolution, len(col) * resolution))
    return runs


def _match_naive(dets, gts, rho_dtc, rho_gtc):
    valid = []
    fp = 0
    for don, doff in dets:
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


def _dataset_arrays(scores, annotations, class_id):
    clip_ids = sorted(scores)
    cols = []
    gt_lists = []
    n_gt = 0
    for cid in clip_ids:
        cols.append(scores[cid].scores[:, class_id].tolist())
        ann = annotations.get(cid)
        gts = []
        if ann is not None:
            gts = sorted((ev.onset, ev.offset) for ev in ann.events
                         if ev.class_id == class_id)
        gt_lists.append(gts)
        n_gt += len(gts)
    return clip_ids, cols, gt_lists, n_gt


def roc_points_brute_force(scores, annotations, class_ref,
                           params: PsdsParams = PsdsParams(),
                           median_filter_seconds: float | None = None):
    """(threshold, tpr, efpr) at every dense-sweep threshold for one class."""
    clip_ids = sorted(scores)
    if not clip_ids:
        raise ValidationError("evaluation needs a non-empty score dataset")
    if median_filter_seconds is not None:
        scores = {cid: median_filter(scores[cid], median_filter_seconds)
                  for cid in clip_ids}
    vocab = scores[clip_ids[0]].vocabulary
    resolution = scores[clip_ids[0]].grid.resolution
    class_id = vocab.index(class_ref) if isinstance(class_ref, str) else int(class_ref)
    duration_hours = sum(
        (annotations[cid].duration if cid in annotations else scores[cid].grid.duration)
        for cid in clip_ids
    ) / 3600.0
    _, cols, gt_lists, n_gt = _dataset_arrays(scores, annotations, class_id)
    thresholds = dense_thresholds(np.concatenate(
        [scores[cid].scores[:, class_id] for cid in clip_ids]))
    points = []
    for thr in thresholds:
        tp = 0
        fp = 0
        for col, gts in zip(cols, gt_lists):
            dets = _decode_runs(col, thr, resolution)
            ctp, cfp = _match_naive(dets, gts, params.rho_dtc, params.rho_gtc)
            tp += ctp
            fp += cfp
        tpr = (tp / n_gt) if n_gt > 0 else 1.0
        points.append((float(thr), tpr, fp / duration_hours))
    return points


def _upper_staircase(points):
    """Points (efpr, tpr) -> staircase as (xs ascending, ys strictly rising)."""
    xs = []
    ys = []
    best = -1.0
    for efpr, tpr in sorted(points, key=lambda p: (p[0], -p[1])):
        if tpr > best:
            xs.append(efpr)
            ys.append(tpr)
            best = tpr
    return xs, ys


def psds_brute_force(scores, annotations, params: PsdsParams = PsdsParams(),
                     median_filter_seconds: float | None = None) -> float:
    """Dense-sweep detection score; the reference value for the engine."""
    clip_ids = sorted(scores)
    if not clip_ids:
        raise ValidationError("evaluation needs a non-empty score dataset")
    vocab = scores[clip_ids[0]].vocabulary
    staircases = []
    for c in range(len(vocab)):
        ann_count = sum(
            1 for cid in clip_ids for ev in annotations.get(
                cid, _EMPTY).events if ev.class_id == c)
        if ann_count == 0 and params.missing_gt == "exclude":
            continue
        if ann_count == 0 and params.missing_gt == "tpr_one":
            staircases.append(([0.0], [1.0]))
            continue
        pts = roc_points_brute_force(scores, annotations, c, params,
                                     median_filter_seconds)
        staircases.append(_upper_staircase([(e, t) for _, t, e in pts]))
    if not staircases:
        raise ValidationError("no class is left to aggregate (all excluded)")

    e_max = params.e_max
    support = sorted({x for xs, _ in staircases for x in xs if x < e_max}
                     | {0.0, e_max})
    integral = 0.0
    for j in range(len(support) - 1):
        e = support[j]
        tprs = []
        for xs, ys in staircases:
            k = bisect_right(xs, e) - 1
            tprs.append(ys[k] if k >= 0 else 0.0)
        mean = sum(tprs) / len(tprs)
        if params.alpha_st > 0:
            var = sum((t - mean) ** 2 for t in tprs) / len(tprs)
            etpr = max(mean - params.alpha_st * math.sqrt(var), 0.0)
        else:
            etpr = mean
        integral += etpr * (support[j + 1] - e)
    return integral / e_max


class _Empty:
    events = ()


_EMPTY = _Empty()

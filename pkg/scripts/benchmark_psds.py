#!/usr/bin/env python3
"""Time the exact sweep engine on a synthetic dataset.

Defaults match the performance target shape (1000 clips x 50 classes x 250
frames); the dataset is generated from a fixed seed so timings are comparable
across runs.

Usage:
    python scripts/benchmark_psds.py [--clips N] [--classes C] [--threads T]
"""

import argparse
import time

import numpy as np

from sedkit import (
    ClassVocabulary,
    ClipAnnotations,
    Event,
    FrameGrid,
    PsdsParams,
    ScoreMatrix,
    psds,
)


def make_benchmark(n_clips: int, n_classes: int, frames: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    vocab = ClassVocabulary(tuple(f"k{i:03d}" for i in range(n_classes)))
    grid = FrameGrid(0.04, frames)
    duration = frames * 0.04
    scores = {}
    annotations = {}
    for i in range(n_clips):
        cid = f"clip{i:05d}"
        scores[cid] = ScoreMatrix(grid, vocab, rng.random((frames, n_classes)))
        events = []
        for c in rng.choice(n_classes, size=min(3, n_classes), replace=False):
            onset = float(rng.uniform(0, duration * 0.8))
            offset = float(min(duration, onset + rng.uniform(0.3, 2.0)))
            events.append(Event(int(c), onset, offset))
        annotations[cid] = ClipAnnotations(cid, duration, tuple(events))
    return scores, annotations


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--clips", type=int, default=1000)
    ap.add_argument("--classes", type=int, default=50)
    ap.add_argument("--frames", type=int, default=250)
    ap.add_argument("--threads", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"building {args.clips} clips x {args.classes} classes x "
          f"{args.frames} frames ...")
    scores, annotations = make_benchmark(args.clips, args.classes, args.frames,
                                         args.seed)
    params = PsdsParams()
    t0 = time.perf_counter()
    result = psds(scores, annotations, params, threads=args.threads)
    elapsed = time.perf_counter() - t0
    print(f"psds = {result.psds:.6f}")
    print(f"elapsed: {elapsed:.2f} s on {args.threads} thread(s)")


if __name__ == "__main__":
    main()

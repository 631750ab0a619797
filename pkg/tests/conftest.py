"""Shared builders for randomized fixtures used across the suite."""

from __future__ import annotations

import numpy as np
import pytest

from sedkit import (
    ClassVocabulary,
    ClipAnnotations,
    Event,
    FrameGrid,
    ScoreMatrix,
)

RESOLUTION = 0.04


def make_micro_dataset(seed: int, max_clips: int = 10, max_classes: int = 3,
                       max_frames: int = 25):
    """Small random scores+annotations pair for oracle cross-checks.

    Half the clips use scores quantized to a coarse value grid so threshold
    ties across frames and clips actually occur.
    """
    rng = np.random.default_rng(seed)
    n_clips = int(rng.integers(2, max_clips + 1))
    n_classes = int(rng.integers(1, max_classes + 1))
    frames = int(rng.integers(5, max_frames + 1))
    vocab = ClassVocabulary(tuple(f"k{i}" for i in range(n_classes)))
    scores = {}
    annotations = {}
    for i in range(n_clips):
        cid = f"clip{i:02d}"
        if rng.random() < 0.5:
            vals = rng.integers(0, 6, size=(frames, n_classes)) / 5.0
        else:
            vals = rng.random((frames, n_classes))
        scores[cid] = ScoreMatrix(FrameGrid(RESOLUTION, frames), vocab, vals)
        duration = frames * RESOLUTION
        events = []
        for c in range(n_classes):
            for _ in range(int(rng.integers(0, 4))):
                onset = float(rng.uniform(0, duration * 0.9))
                offset = float(min(duration, onset + rng.uniform(0.01, duration * 0.5)))
                if offset > onset:
                    events.append(Event(c, onset, offset))
        annotations[cid] = ClipAnnotations(cid, duration, tuple(events))
    return scores, annotations


def make_tracking_dataset(seed: int, n_clips: int = 6, n_classes: int = 2,
                          frames: int = 250):
    """Scores that follow the reference events with graded per-class quality:
    higher class indices miss more events and emit more spurious detections,
    so per-class curves are unequal and the overall score sits inside (0, 1).
    """
    rng = np.random.default_rng(seed)
    vocab = ClassVocabulary(tuple(f"k{i}" for i in range(n_classes)))
    grid = FrameGrid(RESOLUTION, frames)
    duration = frames * RESOLUTION
    scores = {}
    annotations = {}
    for i in range(n_clips):
        cid = f"clip{i:02d}"
        vals = rng.random((frames, n_classes)) * 0.1
        events = []
        for c in range(n_classes):
            miss_prob = 0.35 * c / max(n_classes - 1, 1)
            for _ in range(2):
                onset = float(rng.uniform(0, duration - 2.0))
                offset = float(onset + rng.uniform(0.8, 1.8))
                events.append(Event(c, onset, offset))
                if rng.random() >= miss_prob:
                    f0 = int(onset / RESOLUTION)
                    f1 = int(offset / RESOLUTION)
                    vals[f0:f1, c] = float(rng.uniform(0.75, 1.0))
            for _ in range(rng.binomial(3, c / max(n_classes - 1, 1) * 0.5)):
                f0 = int(rng.integers(0, frames - 12))
                vals[f0:f0 + 10, c] = float(rng.uniform(0.7, 0.95))
        scores[cid] = ScoreMatrix(grid, vocab, vals)
        annotations[cid] = ClipAnnotations(cid, duration, tuple(events))
    return scores, annotations


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

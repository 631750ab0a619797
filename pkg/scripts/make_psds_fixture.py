#!/usr/bin/env python3
"""Regenerate the bundled evaluation fixture under tests/fixtures/psds_demo.

The fixture is a small synthetic dataset (4 clips, 3 classes, 50 frames at
40 ms) whose detection score is pinned by the brute-force dense-sweep scorer,
so CLI and library results can be asserted against a value that was computed
by the independent reference path. Scores are quantized to single precision
and a coarse value grid so file round-trips are lossless and threshold ties
occur.
"""

import json
from pathlib import Path

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
from sedkit import io as sio
from sedkit.psds_oracle import psds_brute_force

RESOLUTION = 0.04
FRAMES = 50
SEED = 20240917


def build_dataset():
    rng = np.random.default_rng(SEED)
    vocab = ClassVocabulary(("speech", "dog", "siren"))
    grid = FrameGrid(RESOLUTION, FRAMES)
    duration = FRAMES * RESOLUTION
    scores = {}
    annotations = {}
    for i in range(4):
        cid = f"clip{i}"
        vals = rng.integers(0, 11, size=(FRAMES, 3)) / 50.0  # floor noise <= 0.2
        events = []
        for c in range(3):
            n_events = int(rng.integers(1, 3))
            for _ in range(n_events):
                onset = float(np.float32(rng.uniform(0, duration - 0.5)))
                offset = float(np.float32(min(duration, onset + rng.uniform(0.2, 0.8))))
                events.append(Event(c, onset, offset))
                if rng.random() < 0.8:  # detected events get a high plateau
                    f0 = int(onset / RESOLUTION)
                    f1 = max(f0 + 1, int(offset / RESOLUTION))
                    vals[f0:f1, c] = rng.integers(35, 50) / 50.0
        # a couple of spurious bumps
        for _ in range(2):
            c = int(rng.integers(0, 3))
            f0 = int(rng.integers(0, FRAMES - 6))
            vals[f0:f0 + 4, c] = rng.integers(30, 48) / 50.0
        scores[cid] = ScoreMatrix(grid, vocab, vals)
        annotations[cid] = ClipAnnotations(cid, duration, tuple(events))
    return vocab, scores, annotations


def main():
    out = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "psds_demo"
    (out / "scores").mkdir(parents=True, exist_ok=True)
    vocab, scores, annotations = build_dataset()
    sio.write_vocabulary(out / "vocab.txt", vocab)
    sio.write_events_tsv(out / "gt.tsv", annotations.values(), vocab)
    for cid, sm in scores.items():
        sio.write_score_tsv(out / "scores" / f"{cid}.tsv", sm)

    # pin the expected value from the files exactly as a consumer reads them
    reread = sio.read_scores_dir(out / "scores")
    gt = sio.read_events_tsv(out / "gt.tsv", vocab,
                             durations=FRAMES * RESOLUTION)
    params = PsdsParams()
    oracle = psds_brute_force(reread, gt, params)
    engine = psds(reread, gt, params).psds
    assert abs(oracle - engine) < 1e-9, (oracle, engine)
    expected = {
        "psds": oracle,
        "parameters": {"rho_dtc": params.rho_dtc, "rho_gtc": params.rho_gtc,
                       "alpha_st": params.alpha_st, "e_max": params.e_max},
        "dataset_duration_hours": 4 * FRAMES * RESOLUTION / 3600.0,
    }
    (out / "expected.json").write_text(json.dumps(expected, indent=2,
                                                  sort_keys=True) + "\n")
    print(f"fixture written to {out}")
    print(f"psds (dense-sweep reference) = {oracle!r}")


if __name__ == "__main__":
    main()

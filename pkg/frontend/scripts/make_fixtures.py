#!/usr/bin/env python3
"""Regenerate the parity fixtures under frontend/fixtures/.

Each fixture pins inputs plus the value the toolkit produces for them, so the
TypeScript client can assert exact agreement. All array inputs are quantized
to single precision up front (the interchange format), which makes every file
round-trip lossless; expected array outputs are quantized the same way when
the CLI path emits binary files.
"""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from sedkit import (
    ClassVocabulary,
    ClipAnnotations,
    Event,
    FrameGrid,
    KdConfig,
    OnsetEvalConfig,
    PsdsParams,
    ScoreMatrix,
    kd_loss,
    kd_loss_grad,
    label_frequencies,
    median_filter,
    mixup_with_targets,
    onset_f,
    psds,
    resample,
    sampling_weights,
)
from sedkit import io as sio
from sedkit.cli import main as cli_main
from sedkit.resample import EmbeddingSequence

OUT = Path(__file__).resolve().parent.parent / "fixtures"


def f32(values):
    return np.asarray(values, dtype=np.float32).astype(np.float64)


def rows(arr):
    return [[float(v) for v in row] for row in np.asarray(arr)]


def kd_fixture(rng):
    student = f32(rng.normal(size=(4, 3)) * 2)
    hard = rng.integers(0, 2, (4, 3)).astype(float)
    soft = f32(rng.random((4, 3)))
    lam = 0.3
    cfg = KdConfig(lam)
    return {
        "student": rows(student),
        "hard": rows(hard),
        "soft": rows(soft),
        "lambda": lam,
        "loss": kd_loss(student, hard, soft, cfg),
        "lossHardOnly": kd_loss(student, hard, hard, KdConfig(0.0)),
        "grad": rows(kd_loss_grad(student, hard, soft, cfg)),
    }


def mixup_fixture(rng):
    fa = f32(rng.normal(size=(6, 5)))
    fb = f32(rng.normal(size=(6, 5)))
    ha = rng.integers(0, 2, (8, 2)).astype(float)
    hb = rng.integers(0, 2, (8, 2)).astype(float)
    sa = f32(rng.uniform(0.05, 0.95, (8, 2)))
    sb = f32(rng.uniform(0.05, 0.95, (8, 2)))
    lam = 0.25
    feats, hard, soft = mixup_with_targets((fa, ha, sa), (fb, hb, sb), lam)
    return {
        "a": {"features": rows(fa), "hard": rows(ha), "soft": rows(sa)},
        "b": {"features": rows(fb), "hard": rows(hb), "soft": rows(sb)},
        "lam": lam,
        # the CLI writes f32 containers, so pin the quantized outputs
        "features": rows(f32(feats)),
        "hard": rows(f32(hard)),
        "soft": rows(f32(soft)),
    }


def median_fixture(rng):
    scores = f32(rng.integers(0, 21, size=(40, 3)) / 20.0)
    sm = ScoreMatrix(FrameGrid(0.04, 40),
                     ClassVocabulary(("c000", "c001", "c002")), scores)
    filtered = median_filter(sm, 0.48)
    return {
        "scores": rows(scores),
        "windowSeconds": 0.48,
        "resolution": 0.04,
        "expected": rows(f32(filtered.scores)),
    }


def resample_fixture(rng):
    values = f32(rng.normal(size=(496, 3)))
    out = resample(EmbeddingSequence("clip", values), 250)
    up = f32(rng.normal(size=(62, 2)))
    out_up = resample(EmbeddingSequence("clip", up), 250)
    return {
        "pool": {"input": rows(values), "frames": 250,
                 "expected": rows(f32(out.values))},
        "interp": {"input": rows(up), "frames": 250,
                   "expected": rows(f32(out_up.values))},
    }


def events_fixture():
    vocab = ClassVocabulary(("dog", "cat"))
    events = [
        {"filename": "clip1.wav", "onset": 0.5, "offset": 2.0, "label": "dog"},
        {"filename": "clip1.wav", "onset": 3.0, "offset": 4.5, "label": "cat"},
        {"filename": "clip2.wav", "onset": 1.0, "offset": 2.5, "label": "dog"},
        {"filename": "clip2.wav", "onset": 5.0, "offset": 5.5, "label": "dog"},
    ]
    annotations = {}
    for row in events:
        cid = Path(row["filename"]).stem
        ann = annotations.setdefault(cid, [])
        ann.append(Event(vocab.index(row["label"]), row["onset"], row["offset"]))
    dataset = [ClipAnnotations(cid, 10.0, tuple(evs))
               for cid, evs in annotations.items()]
    weights = sampling_weights(dataset, vocab)
    return vocab, events, dataset, {
        "events": events,
        "vocabulary": list(vocab.names),
        "clipDuration": 10.0,
        "expected": {"clipIds": list(weights.clip_ids),
                     "weights": [float(w) for w in weights.weights]},
        "frequencies": [float(x) for x in label_frequencies(dataset, vocab)],
    }


def sample_fixture(weights_fixture):
    expected_weights = weights_fixture["expected"]
    n, seed = 64, 7
    with tempfile.TemporaryDirectory() as tmp:
        tsv = Path(tmp) / "weights.tsv"
        lines = ["filename\tweight"]
        for cid, w in zip(expected_weights["clipIds"], expected_weights["weights"]):
            lines.append(f"{cid}\t{w!r}")
        tsv.write_text("\n".join(lines) + "\n")
        out = Path(tmp) / "samples.txt"
        assert cli_main(["sample", "--weights", str(tsv), "--n", str(n),
                         "--seed", str(seed), "--out", str(out)]) == 0
        draws = out.read_text().splitlines()
    return {"weights": expected_weights, "n": n, "seed": seed,
            "expected": draws}


def psds_fixture(rng, vocab, events, dataset):
    scores = {}
    for ann in dataset:
        vals = rng.integers(0, 11, size=(250, 2)) / 40.0
        for ev in ann.events:
            if rng.random() < 0.75:
                f0 = int(ev.onset / 0.04)
                f1 = max(f0 + 1, int(ev.offset / 0.04))
                vals[f0:f1, ev.class_id] = rng.integers(30, 41) / 40.0
        scores[ann.clip_id] = ScoreMatrix(FrameGrid(0.04, 250), vocab, f32(vals))
    params = PsdsParams()
    result = psds(scores, {a.clip_id: a for a in dataset}, params)
    return {
        "scores": {cid: rows(f32(sm.scores)) for cid, sm in scores.items()},
        "events": events,
        "vocabulary": list(vocab.names),
        "resolution": 0.04,
        "expected": result.psds,
        "expectedDurationHours": result.dataset_duration_hours,
        "curves": {name: [[x, y] for x, y in pts]
                   for name, pts in result.curves.items()},
    }


def onset_fixture(vocab):
    pred = [
        {"filename": "clip1.wav", "onset": 1.04, "offset": 2.0, "label": "dog"},
        {"filename": "clip1.wav", "onset": 6.0, "offset": 6.5, "label": "dog"},
        {"filename": "clip2.wav", "onset": 3.0, "offset": 3.2, "label": "cat"},
    ]
    gt = [
        {"filename": "clip1.wav", "onset": 1.00, "offset": 2.0, "label": "dog"},
        {"filename": "clip2.wav", "onset": 3.01, "offset": 3.2, "label": "cat"},
        {"filename": "clip2.wav", "onset": 8.0, "offset": 8.4, "label": "cat"},
    ]

    def to_events(records):
        out = {}
        for row in records:
            cid = Path(row["filename"]).stem
            out.setdefault(cid, []).append(
                Event(vocab.index(row["label"]), row["onset"], row["offset"]))
        return out

    scores = onset_f(to_events(pred), to_events(gt), OnsetEvalConfig(0.05))
    return {
        "pred": pred,
        "gt": gt,
        "tolerance": 0.05,
        "expected": {"precision": scores.precision, "recall": scores.recall,
                     "f1": scores.f1, "tp": scores.tp, "fp": scores.fp,
                     "fn": scores.fn},
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(2025)
    vocab, events, dataset, weights_fx = events_fixture()
    fixtures = {
        "kd": kd_fixture(rng),
        "mixup": mixup_fixture(rng),
        "median": median_fixture(rng),
        "resample": resample_fixture(rng),
        "samplingWeights": weights_fx,
        "weightedSample": sample_fixture(weights_fx),
        "psds": psds_fixture(rng, vocab, events, dataset),
        "onsetF": onset_fixture(vocab),
    }
    path = OUT / "parity.json"
    path.write_text(json.dumps(fixtures, indent=1, sort_keys=True) + "\n")
    print(f"wrote {path} ({path.stat().st_size} bytes)")


if __name__ == "__main__":
    sys.exit(main())

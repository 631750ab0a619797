"""Temporal resampling of embedding sequences to the canonical frame count,
the position-wise linear prediction head, and the warmup+cosine learning-rate
schedule used to train it.

Different audio encoders emit different sequence lengths for the same clip
(e.g. 62, 250, 496 or 497 frames for 10 s); everything downstream runs on one
canonical 250-frame grid, so longer sequences are adaptively average-pooled
and shorter ones linearly interpolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, NumericError, ValidationError
from .timeline import ClassVocabulary, FrameGrid, ScoreMatrix, _freeze

CANONICAL_FRAMES = 250


@dataclass(frozen=True, eq=False)
class EmbeddingSequence:
    """One clip's frame embeddings, shape (frames, dim)."""

    clip_id: str
    values: np.ndarray

    def __post_init__(self):
        vals = _freeze(self.values)
        if vals.ndim != 2:
            raise ContractError(f"embeddings must be 2-D, got shape {vals.shape}")
        if vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ContractError(f"embeddings must be non-empty, got shape {vals.shape}")
        if not np.isfinite(vals).all():
            raise NumericError(f"embeddings for clip {self.clip_id!r} are not finite")
        object.__setattr__(self, "values", vals)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class LinearHead:
    """Position-wise linear layer mapping dim-D embeddings to C class logits."""

    weight: np.ndarray  # (C, D)
    bias: np.ndarray    # (C,)

    def __post_init__(self):
        w = _freeze(self.weight)
        b = _freeze(self.bias)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ContractError(
                f"inconsistent head shapes: weight {w.shape}, bias {b.shape}"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise NumericError("head parameters must be finite")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class ScheduleConfig:
    """Linear warmup to ``peak_lr`` followed by a cosine decay to ``final_lr``."""

    peak_lr: float
    warmup_steps: int
    total_steps: int
    final_lr: float = 0.0

    def __post_init__(self):
        if not self.peak_lr > 0:
            raise ValidationError(f"peak_lr must be positive: {self.peak_lr}")
        if self.warmup_steps < 0:
            raise ValidationError(f"warmup_steps must be >= 0: {self.warmup_steps}")
        if self.total_steps <= self.warmup_steps:
            raise ValidationError(
                f"total_steps {self.total_steps} must exceed warmup {self.warmup_steps}"
            )
        if self.final_lr < 0:
            raise ValidationError(f"final_lr must be >= 0: {self.final_lr}")


def adaptive_avg_pool(e: EmbeddingSequence, out_frames: int) -> EmbeddingSequence:
    """Downsample by averaging buckets [floor(i*S/out), ceil((i+1)*S/out)).

    Buckets may overlap by one frame when ``out`` does not divide ``S``; with
    an exact divisor this is plain non-overlapping block averaging.
    """
    s = e.num_frames
    if not 1 <= out_frames <= s:
        raise ContractError(
            f"adaptive_avg_pool cannot grow {s} frames to {out_frames}; "
            "use linear_interp for upsampling"
        )
    if out_frames == s:
        return e
    v = e.values
    out = np.empty((out_frames, e.dim))
    for i in range(out_frames):
        lo = (i * s) // out_frames
        hi = -((-(i + 1) * s) // out_frames)  # ceil((i+1)*S/out)
        out[i] = v[lo:hi].mean(axis=0)
    return replace(e, values=out)


def linear_interp(e: EmbeddingSequence, out_frames: int) -> EmbeddingSequence:
    """Endpoint-aligned linear upsampling: output i reads source coordinate
    i*(S-1)/(out-1), so the first/last output frames equal the first/last
    input frames exactly. A single-frame input broadcasts."""
    s = e.num_frames
    if out_frames < 2:
        raise ContractError(f"linear_interp needs out_frames >= 2, got {out_frames}")
    v = e.values
    if s == 1:
        return replace(e, values=np.repeat(v, out_frames, axis=0))
    if out_frames == s:
        return e
    # Integer products are exact in doubles, so src[-1] == s-1 exactly.
    src = (np.arange(out_frames) * (s - 1)) / (out_frames - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, s - 1)
    w = (src - lo)[:, None]
    out = v[lo] + w * (v[hi] - v[lo])
    return replace(e, values=out)


def resample(e: EmbeddingSequence, out_frames: int = CANONICAL_FRAMES) -> EmbeddingSequence:
    """Resample to ``out_frames``: pooling when shrinking, interpolation when
    growing, identity when the length already matches."""
    s = e.num_frames
    if s == out_frames:
        return e
    if s > out_frames:
        return adaptive_avg_pool(e, out_frames)
    if s == 1:
        return replace(e, values=np.repeat(e.values, out_frames, axis=0))
    return linear_interp(e, out_frames)


def head_forward(e: EmbeddingSequence, head: LinearHead,
                 vocab: ClassVocabulary | None = None,
                 resolution: float = 0.04) -> ScoreMatrix:
    """Apply the linear head frame by frame, producing logit scores.

    When no vocabulary is supplied, generic class names are synthesized so the
    result is still a well-formed score matrix.
    """
    if e.dim != head.dim:
        raise ContractError(
            f"embedding dim {e.dim} does not match head dim {head.dim}"
        )
    if vocab is None:
        vocab = ClassVocabulary(tuple(f"class_{i:03d}" for i in range(head.num_classes)))
    elif len(vocab) != head.num_classes:
        raise ContractError(
            f"vocabulary size {len(vocab)} does not match head classes {head.num_classes}"
        )
    logits = e.values @ head.weight.T + head.bias
    return ScoreMatrix(FrameGrid(resolution, e.num_frames), vocab, logits,
                       is_logits=True)


def lr_at(cfg: ScheduleConfig, step: int) -> float:
    """Learning rate at an integer step: linear 0 -> peak over the warmup,
    cosine peak -> final afterwards, clamped to final beyond total_steps."""
    if step < 0:
        raise ContractError(f"step must be >= 0: {step}")
    if step > cfg.total_steps:
        return cfg.final_lr
    if step < cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    span = cfg.total_steps - cfg.warmup_steps
    frac = (step - cfg.warmup_steps) / span
    return cfg.final_lr + (cfg.peak_lr - cfg.final_lr) * 0.5 * (1.0 + math.cos(math.pi * frac))

"""Ensemble distillation targets, the frame-level distillation loss and its
gradient, triple mixup, inverse-active-time sampling weights, alias-table
weighted sampling, and a small gradient-descent linear-probe trainer.

Soft targets come from averaging teacher logits class-wise per frame and
squashing the average once; the loss mixes binary cross-entropy against the
hard frame labels and against those soft targets with a single weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ContractError, NumericError, TrainingError, ValidationError
from .resample import EmbeddingSequence, LinearHead, ScheduleConfig, lr_at
from .timeline import ClassVocabulary, ClipAnnotations, ScoreMatrix, TargetMatrix


@dataclass(frozen=True)
class KdConfig:
    """Weight of the soft-target term; loss reduces by mean over frames x classes."""

    lambda_kd: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.lambda_kd <= 1.0:
            raise ValidationError(f"lambda_kd must be in [0, 1]: {self.lambda_kd}")


@dataclass(frozen=True, eq=False)
class SamplingWeights:
    """Normalized clip-sampling distribution (weights sum to one)."""

    clip_ids: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "clip_ids", tuple(self.clip_ids))
        w = np.array(self.weights, dtype=np.float64, copy=True)
        w.setflags(write=False)
        if w.ndim != 1 or len(w) != len(self.clip_ids):
            raise ContractError("one weight per clip id is required")
        if len(w) == 0:
            raise ValidationError("sampling distribution must not be empty")
        if not (w > 0).all():
            raise ValidationError("all sampling weights must be positive")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValidationError("weights must be normalized to sum to 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_raw(cls, clip_ids, raw_weights) -> "SamplingWeights":
        raw = np.asarray(raw_weights, dtype=np.float64)
        total = float(raw.sum())
        if not total > 0:
            raise ValidationError("total raw weight must be positive")
        return cls(tuple(clip_ids), raw / total)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.clip_ids, self.weights.tolist()))


def _coerce(x, name: str, expect_logits: bool = False) -> np.ndarray:
    if isinstance(x, ScoreMatrix):
        if expect_logits and not x.is_logits:
            raise ContractError(f"{name} must be a logit-valued score matrix")
        return x.scores
    if isinstance(x, TargetMatrix):
        return x.values
    if isinstance(x, EmbeddingSequence):
        return x.values
    return np.asarray(x, dtype=np.float64)


def ensemble_average(members) -> ScoreMatrix:
    """Elementwise arithmetic mean of per-model logit matrices for one clip."""
    members = list(members)
    if not members:
        raise ContractError("ensemble must have at least one member")
    first = members[0]
    for m in members[1:]:
        if m.scores.shape != first.scores.shape:
            raise ContractError(
                f"member shape {m.scores.shape} != {first.scores.shape}"
            )
        if m.vocabulary.names != first.vocabulary.names:
            raise ContractError("ensemble members must share one vocabulary")
        if m.grid != first.grid:
            raise ContractError("ensemble members must share one frame grid")
        if not m.is_logits or not first.is_logits:
            raise ContractError("ensemble averaging operates on logits")
    if not first.is_logits:
        raise ContractError("ensemble averaging operates on logits")
    mean = np.mean(np.stack([m.scores for m in members]), axis=0)
    return ScoreMatrix(first.grid, first.vocabulary, mean, is_logits=True)


def ensemble_soft_targets(members) -> TargetMatrix:
    """Average member logits class-wise per frame, then squash once.

    Averaging in logit space and applying the sigmoid afterwards keeps the
    targets strictly inside (0, 1).
    """
    avg = ensemble_average(members)
    return TargetMatrix(avg.grid, expit(avg.scores))


def kd_loss(student_logits, hard, soft, cfg: KdConfig = KdConfig()) -> float:
    """(1-l)*BCE(sigmoid(z), hard) + l*BCE(sigmoid(z), soft), averaged over
    frames x classes.

    Computed via the softplus identity BCE(z, y) = softplus(z) - y*z, which is
    stable for large |z|.
    """
    z = _coerce(student_logits, "student_logits", expect_logits=True)
    h = _coerce(hard, "hard")
    s = _coerce(soft, "soft")
    if z.shape != h.shape or z.shape != s.shape:
        raise ContractError(
            f"shape mismatch: logits {z.shape}, hard {h.shape}, soft {s.shape}"
        )
    if np.isnan(z).any() or np.isnan(h).any() or np.isnan(s).any():
        raise NumericError("NaN in distillation loss inputs")
    base = np.logaddexp(0.0, z)
    loss_hard = float(np.mean(base - h * z))
    loss_soft = float(np.mean(base - s * z))
    lam = cfg.lambda_kd
    return (1.0 - lam) * loss_hard + lam * loss_soft


def kd_loss_grad(student_logits, hard, soft, cfg: KdConfig = KdConfig()) -> np.ndarray:
    """Analytic gradient of :func:`kd_loss` with respect to the logits."""
    z = _coerce(student_logits, "student_logits", expect_logits=True)
    h = _coerce(hard, "hard")
    s = _coerce(soft, "soft")
    if z.shape != h.shape or z.shape != s.shape:
        raise ContractError(
            f"shape mismatch: logits {z.shape}, hard {h.shape}, soft {s.shape}"
        )
    if np.isnan(z).any() or np.isnan(h).any() or np.isnan(s).any():
        raise NumericError("NaN in distillation loss inputs")
    lam = cfg.lambda_kd
    p = expit(z)
    return ((1.0 - lam) * (p - h) + lam * (p - s)) / z.size


def mixup_with_targets(a, b, lam: float):
    """Mix two (features, hard, soft) triples as lam*a + (1-lam)*b.

    Soft targets may be None in both triples; wrapper types are accepted and
    coerced, plain arrays come back out.
    """
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"lam must be in [0, 1]: {lam}")
    fa, ha, sa = a
    fb, hb, sb = b
    if (sa is None) != (sb is None):
        raise ContractError("soft targets must be present in both triples or neither")

    def mix(x, y, name):
        xv = _coerce(x, name)
        yv = _coerce(y, name)
        if xv.shape != yv.shape:
            raise ContractError(f"{name} shapes differ: {xv.shape} vs {yv.shape}")
        return lam * xv + (1.0 - lam) * yv

    mixed_soft = None if sa is None else mix(sa, sb, "soft")
    return mix(fa, fb, "features"), mix(ha, hb, "hard"), mixed_soft


def _union_length(intervals) -> float:
    """Total length of the union of (onset, offset) intervals."""
    if not intervals:
        return 0.0
    intervals = sorted(intervals)
    total = 0.0
    cur_on, cur_off = intervals[0]
    for on, off in intervals[1:]:
        if on <= cur_off:
            cur_off = max(cur_off, off)
        else:
            total += cur_off - cur_on
            cur_on, cur_off = on, off
    total += cur_off - cur_on
    return total


def label_frequencies(dataset, vocab: ClassVocabulary) -> np.ndarray:
    """Per class, the summed duration of the union of that class's event
    intervals within each clip (seconds of active time over the dataset)."""
    dataset = list(dataset)
    if not dataset:
        raise ValidationError("label frequencies need a non-empty dataset")
    freq = np.zeros(len(vocab))
    for ann in dataset:
        per_class: dict[int, list[tuple[float, float]]] = {}
        for ev in ann.events:
            if ev.class_id >= len(vocab):
                raise ValidationError(
                    f"clip {ann.clip_id!r} has class id {ev.class_id} outside vocabulary"
                )
            per_class.setdefault(ev.class_id, []).append((ev.onset, ev.offset))
        for c, ivals in per_class.items():
            freq[c] += _union_length(ivals)
    return freq


def sampling_weights(dataset, vocab: ClassVocabulary, aggregate: str = "sum",
                     empty_policy: str = "skip") -> SamplingWeights:
    """Per-clip sampling weights proportional to inverse label active time.

    Each clip's raw weight aggregates 1/frequency over its distinct labels
    ("sum" by default, "mean" as an option); classes with zero total active
    time are excluded from the aggregation. Clips left without any usable
    label follow ``empty_policy``: "skip" drops them, "min" assigns the
    smallest raw weight seen, "error" raises.
    """
    if aggregate not in ("sum", "mean"):
        raise ContractError(f"unknown aggregate: {aggregate!r}")
    if empty_policy not in ("skip", "min", "error"):
        raise ContractError(f"unknown empty_policy: {empty_policy!r}")
    dataset = list(dataset)
    freq = label_frequencies(dataset, vocab)
    ids: list[str] = []
    raw: list[float] = []
    pending: list[str] = []
    seen: set[str] = set()
    for ann in dataset:
        if ann.clip_id in seen:
            raise ValidationError(f"duplicate clip id: {ann.clip_id!r}")
        seen.add(ann.clip_id)
        labels = sorted({ev.class_id for ev in ann.events if freq[ev.class_id] > 0})
        if not labels:
            if empty_policy == "error":
                raise ValidationError(f"clip {ann.clip_id!r} has no usable labels")
            if empty_policy == "min":
                pending.append(ann.clip_id)
            continue
        inv = [1.0 / freq[c] for c in labels]
        raw_w = sum(inv) if aggregate == "sum" else sum(inv) / len(inv)
        ids.append(ann.clip_id)
        raw.append(raw_w)
    if pending:
        if not raw:
            raise ValidationError("no clip has a usable label")
        floor = min(raw)
        ids.extend(pending)
        raw.extend([floor] * len(pending))
    if not ids:
        raise ValidationError("no clip has a usable label")
    return SamplingWeights.from_raw(ids, raw)


def _build_alias(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Walker alias table: O(K) build, O(1) per draw afterwards."""
    k = len(weights)
    scaled = np.asarray(weights, dtype=np.float64) * (k / float(weights.sum()))
    prob = np.ones(k)
    alias = np.arange(k)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    scaled = scaled.copy()
    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = (scaled[l] + scaled[s]) - 1.0
        (small if scaled[l] < 1.0 else large).append(l)
    return prob, alias


def weighted_sample(w: SamplingWeights, n: int, rng_seed) -> list[str]:
    """Draw ``n`` clip ids independently with replacement, P(clip) = weight.

    Uses an alias table, so each draw costs O(1); draws are deterministic for
    a fixed seed (one integer draw then one uniform draw, both vectorized).
    """
    if n < 0:
        raise ContractError(f"sample count must be >= 0: {n}")
    if n == 0:
        return []
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    prob, alias = _build_alias(w.weights)
    idx = rng.integers(0, len(prob), size=n)
    u = rng.random(n)
    pick = np.where(u < prob[idx], idx, alias[idx])
    return [w.clip_ids[i] for i in pick]


@dataclass(frozen=True)
class ProbeConfig:
    """Hyper-parameters for the linear-probe trainer.

    ``steps`` caps the number of optimizer steps (None trains for the full
    schedule); 0 returns the initialization untouched.
    """

    schedule: ScheduleConfig
    kd: KdConfig = field(default_factory=KdConfig)
    batch_size: int = 32
    mixup: bool = False
    mixup_alpha: float = 0.2
    steps: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be positive: {self.batch_size}")
        if not self.mixup_alpha > 0:
            raise ValidationError(f"mixup_alpha must be positive: {self.mixup_alpha}")
        if self.steps is not None and self.steps < 0:
            raise ValidationError(f"steps must be >= 0: {self.steps}")


def probe_fit(embeddings, hard_targets, soft_targets, cfg: ProbeConfig,
              rng_seed) -> LinearHead:
    """Train a linear head on frozen embeddings by mini-batch gradient descent
    on the distillation loss with the warmup+cosine schedule.

    All clips must share one frame count and embedding dim (resample first).
    The head starts at zero, so a zero-step schedule returns the
    initialization; training is deterministic for a fixed seed. Raises
    :class:`TrainingError` with the step index if the loss stops being finite.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    embeddings = list(embeddings)
    hard_targets = list(hard_targets)
    if len(embeddings) != len(hard_targets) or not embeddings:
        raise ContractError("need one hard target per embedding clip")
    if soft_targets is not None:
        soft_targets = list(soft_targets)
        if len(soft_targets) != len(embeddings):
            raise ContractError("need one soft target per embedding clip")
    frames = embeddings[0].num_frames
    dim = embeddings[0].dim
    hard_arrays = [_coerce(t, "hard") for t in hard_targets]
    n_classes = hard_arrays[0].shape[1]
    for e, h in zip(embeddings, hard_arrays):
        if e.num_frames != frames or e.dim != dim:
            raise ContractError("all clips must share one frame count and dim")
        if h.shape != (frames, n_classes):
            raise ContractError(
                f"target shape {h.shape} does not match ({frames}, {n_classes})"
            )
    emb = np.stack([e.values for e in embeddings])
    hard = np.stack(hard_arrays)
    soft = None if soft_targets is None \
        else np.stack([_coerce(t, "soft") for t in soft_targets])
    if soft is not None and soft.shape != hard.shape:
        raise ContractError("soft targets must match hard target shapes")

    weight = np.zeros((n_classes, dim))
    bias = np.zeros(n_classes)
    lam = cfg.kd.lambda_kd
    n_clips = len(embeddings)
    n_steps = cfg.schedule.total_steps if cfg.steps is None \
        else min(cfg.steps, cfg.schedule.total_steps)
    for step in range(n_steps):
        sel = rng.integers(0, n_clips, size=min(cfg.batch_size, n_clips))
        xb = emb[sel]
        hb = hard[sel]
        sb = soft[sel] if soft is not None else hb
        if cfg.mixup:
            mix_lam = float(rng.beta(cfg.mixup_alpha, cfg.mixup_alpha))
            perm = rng.permutation(len(sel))
            xb, hb, sb = mixup_with_targets((xb, hb, sb),
                                            (xb[perm], hb[perm], sb[perm]), mix_lam)
        x = xb.reshape(-1, dim)
        h = hb.reshape(-1, n_classes)
        s = sb.reshape(-1, n_classes)
        with np.errstate(over="ignore", invalid="ignore"):
            z = x @ weight.T + bias
            p = expit(z)
            grad = ((1.0 - lam) * (p - h) + lam * (p - s)) / z.size
        if not np.isfinite(grad).all():
            raise TrainingError(f"training diverged at step {step}", step=step)
        lr = lr_at(cfg.schedule, step)
        with np.errstate(over="ignore", invalid="ignore"):
            weight = weight - lr * (grad.T @ x)
            bias = bias - lr * grad.sum(axis=0)
    return LinearHead(weight, bias)

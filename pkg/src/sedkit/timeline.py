"""Clip annotations, class vocabularies, frame grids, and the conversions
between event and frame representations.

Events are half-open time intervals in seconds. Frame ``t`` of a grid with
resolution ``r`` covers ``[t*r, (t+1)*r)``, so adjacent frames partition the
timeline. A frame is considered active for an event when the overlap between
the two intervals has strictly positive duration (a >=50% overlap rule is
available as an option).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, SizeError, ValidationError, VocabularyError

# Relative slack when snapping event boundaries to frame edges; absorbs
# decimal parsing noise (0.2 / 0.04 is not exactly 5 in binary floats).
_SNAP_REL = 1e-9


def _freeze(arr, dtype=np.float64) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _div_snapped(x: float, r: float) -> float:
    """x / r, snapped to the nearest integer when within relative slack."""
    t = x / r
    k = round(t)
    if abs(t - k) <= _SNAP_REL * max(1.0, abs(t)):
        return float(k)
    return t


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered set of unique class names; list position defines the class id."""

    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if not self.names:
            raise ValidationError("vocabulary must contain at least one class")
        if any(not n for n in self.names):
            raise ValidationError("class names must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("class names must be unique")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    @classmethod
    def from_names(cls, names) -> "ClassVocabulary":
        return cls(tuple(names))

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __contains__(self, name) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise VocabularyError(f"unknown class name: {name!r}") from None

    def is_subset_of(self, other: "ClassVocabulary") -> bool:
        return all(n in other for n in self.names)


@dataclass(frozen=True)
class Event:
    """One labelled sound event: class id plus [onset, offset) in seconds."""

    class_id: int
    onset: float
    offset: float

    def __post_init__(self):
        if self.class_id < 0:
            raise ValidationError(f"negative class id: {self.class_id}")
        if self.onset < 0:
            raise ValidationError(f"negative onset: {self.onset}")
        if not self.offset > self.onset:
            raise ValidationError(
                f"event must have positive duration, got [{self.onset}, {self.offset})"
            )

    @property
    def duration(self) -> float:
        return self.offset - self.onset


@dataclass(frozen=True)
class ClipAnnotations:
    """All ground-truth events of one audio clip.

    Events of the same class may overlap; event order carries no meaning.
    """

    clip_id: str
    duration: float
    events: tuple[Event, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not self.duration > 0:
            raise ValidationError(f"clip duration must be positive: {self.duration}")
        for ev in self.events:
            if ev.offset > self.duration:
                raise ValidationError(
                    f"event [{ev.onset}, {ev.offset}) extends past clip "
                    f"{self.clip_id!r} of duration {self.duration}"
                )

    @classmethod
    def create(cls, clip_id: str, duration: float, events, clamp: bool = False):
        """Build annotations; ``clamp`` truncates events at the clip end
        (events starting at or after the end are dropped) instead of rejecting
        them."""
        if clamp:
            kept = []
            for ev in events:
                if ev.onset >= duration:
                    continue
                if ev.offset > duration:
                    ev = Event(ev.class_id, ev.onset, duration)
                kept.append(ev)
            events = kept
        return cls(clip_id, duration, tuple(events))

    def events_of_class(self, class_id: int) -> list[Event]:
        return [ev for ev in self.events if ev.class_id == class_id]


@dataclass(frozen=True)
class FrameGrid:
    """Uniform frame raster; frame t covers [t*resolution, (t+1)*resolution)."""

    resolution: float = 0.04
    num_frames: int = 250

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValidationError(f"resolution must be positive: {self.resolution}")
        if self.num_frames < 1:
            raise ValidationError(f"num_frames must be positive: {self.num_frames}")

    @property
    def duration(self) -> float:
        return self.num_frames * self.resolution

    @classmethod
    def for_duration(cls, duration: float, resolution: float = 0.04) -> "FrameGrid":
        return cls(resolution, int(math.ceil(_div_snapped(duration, resolution))))

    def covers(self, duration: float) -> bool:
        return self.duration >= duration * (1.0 - _SNAP_REL)


@dataclass(frozen=True, eq=False)
class TargetMatrix:
    """Per-frame, per-class activity in [0, 1]; hard targets are exactly 0/1."""

    grid: FrameGrid
    values: np.ndarray

    def __post_init__(self):
        vals = _freeze(self.values)
        if vals.ndim != 2:
            raise ContractError(f"target matrix must be 2-D, got shape {vals.shape}")
        if vals.shape[0] != self.grid.num_frames:
            raise ContractError(
                f"target rows {vals.shape[0]} != grid frames {self.grid.num_frames}"
            )
        if not np.isfinite(vals).all():
            raise ValidationError("target matrix contains non-finite values")
        if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
            raise ValidationError("target values must lie in [0, 1]")
        object.__setattr__(self, "values", vals)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Frame-level class scores; probabilities unless flagged as logits."""

    grid: FrameGrid
    vocabulary: ClassVocabulary
    scores: np.ndarray
    is_logits: bool = False

    def __post_init__(self):
        vals = _freeze(self.scores)
        if vals.ndim != 2:
            raise ContractError(f"score matrix must be 2-D, got shape {vals.shape}")
        if vals.shape[0] != self.grid.num_frames:
            raise ContractError(
                f"score rows {vals.shape[0]} != grid frames {self.grid.num_frames}"
            )
        if vals.shape[1] != len(self.vocabulary):
            raise ContractError(
                f"score columns {vals.shape[1]} != vocabulary size {len(self.vocabulary)}"
            )
        if not np.isfinite(vals).all():
            raise ValidationError("score matrix contains non-finite values")
        if not self.is_logits and vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
            raise ValidationError(
                "probability scores must lie in [0, 1]; flag logits with is_logits=True"
            )
        object.__setattr__(self, "scores", vals)

    @property
    def num_frames(self) -> int:
        return self.scores.shape[0]

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1]


def event_frame_span(onset: float, offset: float, resolution: float) -> tuple[int, int]:
    """First frame index with positive overlap and the exclusive end frame."""
    first = int(math.floor(_div_snapped(onset, resolution)))
    end = int(math.ceil(_div_snapped(offset, resolution)))
    return first, end


def rasterize_events(ann: ClipAnnotations, vocab: ClassVocabulary, grid: FrameGrid,
                     overlap_rule: str = "any", clamp: bool = False) -> TargetMatrix:
    """Rasterize strong labels onto the frame grid as hard 0/1 targets.

    ``overlap_rule`` selects frame activation: "any" activates a frame on any
    strictly positive overlap, "half" requires at least half the frame to be
    covered. Events of the same class union together (no double counting).
    """
    if overlap_rule not in ("any", "half"):
        raise ContractError(f"unknown overlap rule: {overlap_rule!r}")
    if not grid.covers(ann.duration) and not clamp:
        raise ValidationError(
            f"grid of {grid.num_frames} frames x {grid.resolution}s does not "
            f"cover clip duration {ann.duration}s"
        )
    values = np.zeros((grid.num_frames, len(vocab)))
    r = grid.resolution
    for ev in ann.events:
        if ev.class_id >= len(vocab):
            raise VocabularyError(
                f"event class id {ev.class_id} outside vocabulary of size {len(vocab)}"
            )
        t0, t1 = event_frame_span(ev.onset, ev.offset, r)
        t0 = max(t0, 0)
        if t1 > grid.num_frames:
            if not clamp:
                raise ValidationError(
                    f"event [{ev.onset}, {ev.offset}) extends past the grid end "
                    f"{grid.duration}s (pass clamp=True to truncate)"
                )
            t1 = grid.num_frames
        if overlap_rule == "half":
            ts = np.arange(t0, t1)
            overlap = np.minimum(ev.offset, (ts + 1) * r) - np.maximum(ev.onset, ts * r)
            ts = ts[overlap >= 0.5 * r - _SNAP_REL * r]
            values[ts, ev.class_id] = 1.0
        else:
            values[t0:t1, ev.class_id] = 1.0
    return TargetMatrix(grid, values)


def decode_events(scores: ScoreMatrix, threshold: float,
                  class_subset=None) -> dict[int, list[Event]]:
    """Threshold frame scores into events, one list per class id.

    Maximal runs of consecutive frames with score >= threshold become one
    event spanning the run; events per class come out disjoint and sorted by
    onset. The comparison is inclusive so threshold 1.0 keeps certain
    detections.
    """
    if scores.is_logits:
        raise ContractError("decode_events needs probabilities; apply a sigmoid first")
    if not (0.0 < threshold <= 1.0):
        raise ContractError(f"threshold must be in (0, 1]: {threshold}")
    if class_subset is None:
        classes = range(scores.num_classes)
    else:
        classes = [scores.vocabulary.index(c) if isinstance(c, str) else int(c)
                   for c in class_subset]
        for c in classes:
            if not 0 <= c < scores.num_classes:
                raise VocabularyError(f"class id {c} out of range")
    r = scores.grid.resolution
    out: dict[int, list[Event]] = {}
    for c in classes:
        mask = (scores.scores[:, c] >= threshold).astype(np.int8)
        edges = np.diff(mask, prepend=0, append=0)
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1)
        out[c] = [Event(c, float(s * r), float(e * r)) for s, e in zip(starts, ends)]
    return out


def project_vocabulary(m, source: ClassVocabulary, target: ClassVocabulary):
    """Reorder/filter class columns from ``source`` order to ``target`` order.

    ``target`` must be a subset of ``source`` by name; values are untouched.
    """
    cols = [source.index(n) for n in target.names]
    if isinstance(m, ScoreMatrix):
        if m.vocabulary.names != source.names:
            raise ContractError("matrix vocabulary does not match the source vocabulary")
        return ScoreMatrix(m.grid, target, m.scores[:, cols], m.is_logits)
    if isinstance(m, TargetMatrix):
        if m.num_classes != len(source):
            raise ContractError(
                f"matrix has {m.num_classes} columns but source vocabulary {len(source)}"
            )
        return TargetMatrix(m.grid, m.values[:, cols])
    raise ContractError(f"cannot project object of type {type(m).__name__}")


def crop_random(m, length_frames: int, rng_seed):
    """Contiguous random crop of ``length_frames`` frames.

    The start index is drawn uniformly from [0, num_frames - length_frames]
    with the seeded generator, so equal seeds give identical crops. Works on
    score matrices, target matrices, and embedding sequences.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    arr = m.scores if isinstance(m, ScoreMatrix) else m.values
    n = arr.shape[0]
    if length_frames < 1:
        raise SizeError(f"crop length must be positive: {length_frames}")
    if length_frames > n:
        raise SizeError(f"crop length {length_frames} exceeds {n} frames")
    start = int(rng.integers(0, n - length_frames + 1))
    sl = arr[start:start + length_frames]
    if isinstance(m, ScoreMatrix):
        return ScoreMatrix(FrameGrid(m.grid.resolution, length_frames),
                           m.vocabulary, sl, m.is_logits)
    if isinstance(m, TargetMatrix):
        return TargetMatrix(FrameGrid(m.grid.resolution, length_frames), sl)
    return dataclasses.replace(m, values=sl)


def concat_slices(slices) -> ScoreMatrix:
    """Concatenate per-slice score matrices along time (e.g. contiguous 10 s
    windows of a long clip evaluated independently)."""
    slices = list(slices)
    if not slices:
        raise ContractError("cannot concatenate an empty list of slices")
    first = slices[0]
    for s in slices[1:]:
        if s.vocabulary.names != first.vocabulary.names:
            raise ContractError("slices must share one vocabulary")
        if s.grid.resolution != first.grid.resolution:
            raise ContractError("slices must share one frame resolution")
        if s.is_logits != first.is_logits:
            raise ContractError("cannot mix logit and probability slices")
    total = sum(s.num_frames for s in slices)
    values = np.concatenate([s.scores for s in slices], axis=0)
    return ScoreMatrix(FrameGrid(first.grid.resolution, total),
                       first.vocabulary, values, first.is_logits)

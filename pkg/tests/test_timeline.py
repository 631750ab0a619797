import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sedkit import (
    ClassVocabulary,
    ClipAnnotations,
    ContractError,
    Event,
    FrameGrid,
    ScoreMatrix,
    SizeError,
    TargetMatrix,
    ValidationError,
    VocabularyError,
    concat_slices,
    crop_random,
    decode_events,
    project_vocabulary,
    rasterize_events,
)
from sedkit.resample import EmbeddingSequence

R = 0.04
AB = ClassVocabulary(("a", "b"))


def sm(values, vocab=None, resolution=R, is_logits=False):
    values = np.asarray(values, dtype=float)
    vocab = vocab or ClassVocabulary(tuple(f"c{i}" for i in range(values.shape[1])))
    return ScoreMatrix(FrameGrid(resolution, values.shape[0]), vocab, values, is_logits)


class TestVocabulary:
    def test_index_roundtrip(self):
        v = ClassVocabulary(("dog", "cat", "rain"))
        assert [v.index(n) for n in v.names] == [0, 1, 2]
        assert len(v) == 3 and "cat" in v

    def test_rejects_duplicates_and_empty(self):
        with pytest.raises(ValidationError):
            ClassVocabulary(("a", "a"))
        with pytest.raises(ValidationError):
            ClassVocabulary(("a", ""))
        with pytest.raises(ValidationError):
            ClassVocabulary(())

    def test_unknown_name(self):
        with pytest.raises(VocabularyError, match="zebra"):
            AB.index("zebra")


class TestEventAndAnnotations:
    def test_zero_length_rejected(self):
        with pytest.raises(ValidationError):
            Event(0, 1.0, 1.0)
        with pytest.raises(ValidationError):
            Event(0, 2.0, 1.0)
        with pytest.raises(ValidationError):
            Event(0, -0.1, 1.0)

    def test_event_past_duration_rejected(self):
        with pytest.raises(ValidationError):
            ClipAnnotations("c", 1.0, (Event(0, 0.5, 1.5),))

    def test_clamp_truncates_and_drops(self):
        ann = ClipAnnotations.create(
            "c", 1.0, [Event(0, 0.5, 1.5), Event(0, 1.2, 2.0)], clamp=True)
        assert len(ann.events) == 1
        assert ann.events[0].offset == 1.0


class TestRasterize:
    def test_basic_span(self):
        # [0.10, 0.20) at 40 ms covers frames 2..4; frame 5 = [0.20, 0.24) is empty
        ann = ClipAnnotations("c", 10.0, (Event(0, 0.10, 0.20),))
        t = rasterize_events(ann, AB, FrameGrid(R, 250))
        assert np.flatnonzero(t.values[:, 0]).tolist() == [2, 3, 4]
        assert t.values[:, 1].sum() == 0

    def test_empty_events(self):
        t = rasterize_events(ClipAnnotations("c", 10.0, ()), AB, FrameGrid(R, 250))
        assert t.values.sum() == 0

    def test_same_class_overlap_is_union(self):
        ann = ClipAnnotations("c", 10.0, (Event(0, 0.0, 0.1), Event(0, 0.05, 0.2)))
        t = rasterize_events(ann, AB, FrameGrid(R, 250))
        assert np.flatnonzero(t.values[:, 0]).tolist() == [0, 1, 2, 3, 4]
        assert t.values.max() == 1.0

    def test_half_overlap_rule(self):
        grid = FrameGrid(R, 250)
        # frame 2 = [0.08, 0.12): covered 0.01 < half by [0.11, 0.20)
        ann = ClipAnnotations("c", 10.0, (Event(0, 0.11, 0.20),))
        any_rule = rasterize_events(ann, AB, grid)
        half_rule = rasterize_events(ann, AB, grid, overlap_rule="half")
        assert np.flatnonzero(any_rule.values[:, 0]).tolist() == [2, 3, 4]
        assert np.flatnonzero(half_rule.values[:, 0]).tolist() == [3, 4]

    def test_unknown_class_id(self):
        ann = ClipAnnotations("c", 10.0, (Event(7, 0.0, 1.0),))
        with pytest.raises(VocabularyError):
            rasterize_events(ann, AB, FrameGrid(R, 250))

    def test_grid_too_short(self):
        ann = ClipAnnotations("c", 10.0, (Event(0, 0.0, 1.0),))
        with pytest.raises(ValidationError):
            rasterize_events(ann, AB, FrameGrid(R, 100))

    def test_boundary_snapping(self):
        # 0.2/0.04 is not exact in floats; the span must still be frames 5..9
        ann = ClipAnnotations("c", 10.0, (Event(0, 0.2, 0.4),))
        t = rasterize_events(ann, AB, FrameGrid(R, 250))
        assert np.flatnonzero(t.values[:, 0]).tolist() == [5, 6, 7, 8, 9]


class TestDecode:
    def test_single_run(self):
        events = decode_events(sm([[0.1], [0.8], [0.9], [0.2]]), 0.5)[0]
        assert [(e.onset, e.offset) for e in events] == [(0.04, 0.12)]

    def test_all_below(self):
        assert decode_events(sm([[0.1], [0.2]]), 0.5)[0] == []

    def test_two_runs(self):
        events = decode_events(sm([[0.6], [0.4], [0.6]]), 0.5)[0]
        assert [(e.onset, e.offset) for e in events] == [(0.0, 0.04), (0.08, 0.12)]

    def test_threshold_one_keeps_certain(self):
        events = decode_events(sm([[1.0], [0.999]]), 1.0)[0]
        assert [(e.onset, e.offset) for e in events] == [(0.0, 0.04)]

    def test_logits_rejected(self):
        with pytest.raises(ContractError):
            decode_events(sm([[0.0]], is_logits=True), 0.5)

    def test_class_subset(self):
        m = sm([[0.9, 0.1], [0.9, 0.9]], vocab=AB)
        out = decode_events(m, 0.5, class_subset=["b"])
        assert set(out) == {1}

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.floats(0.01, 1.0))
    def test_runs_disjoint_and_sorted(self, col, threshold):
        events = decode_events(sm([[v] for v in col]), threshold)[0]
        for prev, cur in zip(events, events[1:]):
            assert prev.offset <= cur.onset
            assert prev.onset < cur.onset


def _frames_oracle(events, resolution, num_frames):
    """Brute-force frame membership: a frame is active iff its interval
    overlaps some event with positive length."""
    active = set()
    for ev in events:
        for t in range(num_frames):
            lo = max(ev.onset, t * resolution)
            hi = min(ev.offset, (t + 1) * resolution)
            # tolerance mirrors the rasterizer's boundary snapping
            if hi - lo > 1e-9 * resolution:
                active.add(t)
    return active


def _runs_from_frames(frames: set) -> list[tuple[int, int]]:
    runs = []
    for t in sorted(frames):
        if runs and runs[-1][1] == t:
            runs[-1] = (runs[-1][0], t + 1)
        else:
            runs.append((t, t + 1))
    return runs


class TestRoundTrip:
    @pytest.mark.parametrize("seed", range(20))
    def test_decode_of_rasterize_matches_interval_union_oracle(self, seed):
        rng = np.random.default_rng(seed)
        num_frames = int(rng.integers(5, 60))
        duration = num_frames * R
        events = []
        for _ in range(int(rng.integers(0, 6))):
            onset = float(rng.uniform(0, duration * 0.95))
            offset = float(min(duration, onset + rng.uniform(0.005, duration / 2)))
            if offset > onset:
                events.append(Event(int(rng.integers(0, 2)), onset, offset))
        ann = ClipAnnotations("c", duration, tuple(events))
        grid = FrameGrid(R, num_frames)
        targets = rasterize_events(ann, AB, grid)
        decoded = decode_events(ScoreMatrix(grid, AB, targets.values), 0.5)
        for c in range(2):
            oracle = _runs_from_frames(
                _frames_oracle([e for e in events if e.class_id == c], R, num_frames))
            got = [(round(e.onset / R), round(e.offset / R)) for e in decoded[c]]
            assert got == oracle

    def test_rasterize_monotone_under_added_event(self):
        rng = np.random.default_rng(0)
        grid = FrameGrid(R, 50)
        for _ in range(20):
            events = [Event(0, float(on := rng.uniform(0, 1.5)),
                            float(on + rng.uniform(0.01, 0.4)))
                      for _ in range(int(rng.integers(0, 4)))]
            base = rasterize_events(ClipAnnotations("c", 2.0, tuple(events)), AB, grid)
            extra = Event(0, float(on := rng.uniform(0, 1.5)),
                          float(on + rng.uniform(0.01, 0.4)))
            more = rasterize_events(
                ClipAnnotations("c", 2.0, tuple(events + [extra])), AB, grid)
            assert (more.values >= base.values).all()


class TestProjectVocabulary:
    def test_permute_and_drop(self):
        src = ClassVocabulary(("a", "b", "c"))
        dst = ClassVocabulary(("c", "a"))
        m = sm([[1.0, 2.0, 3.0]], vocab=src, is_logits=True)
        out = project_vocabulary(m, src, dst)
        assert out.scores.tolist() == [[3.0, 1.0]]
        assert out.vocabulary.names == ("c", "a")

    def test_identity(self):
        m = sm([[0.1, 0.2]], vocab=AB)
        out = project_vocabulary(m, AB, AB)
        assert (out.scores == m.scores).all()

    def test_missing_name(self):
        with pytest.raises(VocabularyError):
            project_vocabulary(sm([[0.1, 0.2]], vocab=AB), AB,
                               ClassVocabulary(("a", "z")))

    def test_target_matrix_and_idempotence(self):
        src = ClassVocabulary(("a", "b", "c"))
        dst = ClassVocabulary(("b", "c"))
        t = TargetMatrix(FrameGrid(R, 1), np.array([[1.0, 0.0, 1.0]]))
        once = project_vocabulary(t, src, dst)
        twice = project_vocabulary(once, dst, dst)
        assert (once.values == twice.values).all()

    def test_column_count_vs_wider_vocab(self):
        # 447-class training layout projected onto a 407-class evaluation set
        wide = ClassVocabulary(tuple(f"c{i:03d}" for i in range(447)))
        narrow = ClassVocabulary(tuple(f"c{i:03d}" for i in range(407)))
        m = sm(np.zeros((2, 447)), vocab=wide)
        assert project_vocabulary(m, wide, narrow).num_classes == 407


class TestCropConcat:
    def test_full_length_identity(self):
        m = sm(np.random.default_rng(0).random((10, 2)), vocab=AB)
        out = crop_random(m, 10, 123)
        assert (out.scores == m.scores).all()

    def test_deterministic_and_in_range(self):
        m = sm(np.random.default_rng(0).random((3000, 2)), vocab=AB)
        a = crop_random(m, 250, 7)
        b = crop_random(m, 250, 7)
        assert (a.scores == b.scores).all()
        assert a.num_frames == 250

    def test_crop_start_range(self):
        values = np.arange(3000.0)[:, None]
        m = sm(values / values.max())
        starts = {int(crop_random(m, 250, seed).scores[0, 0] * values.max())
                  for seed in range(200)}
        assert min(starts) >= 0 and max(starts) <= 2750

    def test_crop_embedding(self):
        e = EmbeddingSequence("x", np.random.default_rng(1).random((20, 3)))
        out = crop_random(e, 5, 0)
        assert out.num_frames == 5 and out.clip_id == "x"

    def test_too_long(self):
        with pytest.raises(SizeError):
            crop_random(sm([[0.5]]), 2, 0)

    def test_concat_twelve_slices(self):
        rng = np.random.default_rng(0)
        slices = [sm(rng.random((250, 2)), vocab=AB) for _ in range(12)]
        out = concat_slices(slices)
        assert out.num_frames == 3000
        assert abs(out.grid.duration - 120.0) < 1e-9

    def test_concat_single_and_empty(self):
        m = sm([[0.5]])
        assert (concat_slices([m]).scores == m.scores).all()
        with pytest.raises(ContractError):
            concat_slices([])

    def test_concat_vocab_mismatch(self):
        with pytest.raises(ContractError):
            concat_slices([sm([[0.5, 0.5]], vocab=AB),
                           sm([[0.5, 0.5]], vocab=ClassVocabulary(("x", "y")))])


class TestMatrixValidation:
    def test_target_range(self):
        with pytest.raises(ValidationError):
            TargetMatrix(FrameGrid(R, 1), np.array([[1.5]]))

    def test_probability_range(self):
        with pytest.raises(ValidationError):
            sm([[1.2]])
        sm([[1.2]], is_logits=True)  # logits are unrestricted

    def test_shape_against_grid(self):
        with pytest.raises(ContractError):
            ScoreMatrix(FrameGrid(R, 3), AB, np.zeros((2, 2)))

    def test_immutable(self):
        m = sm([[0.5]])
        with pytest.raises(ValueError):
            m.scores[0, 0] = 0.0

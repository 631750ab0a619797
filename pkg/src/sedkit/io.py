"""File formats and atomic I/O.

Formats:

* Events TSV: UTF-8, header ``filename<TAB>onset<TAB>offset<TAB>event_label``,
  one event per row, times in decimal seconds. Extra columns are tolerated,
  negative times are rejected.
* Vocabulary file: one class name per line; line order defines class ids.
* Score/target TSV (one file per clip): header
  ``onset<TAB>offset<TAB><class_1>...<class_C>``, one row per frame with the
  frame's interval boundaries and per-class values.
* Binary array container: magic ``SEDB``, little-endian u32 layout version,
  u32 rows, u32 cols, then rows*cols IEEE-754 f32 values row-major. Layout 1
  is time-major (rows are frames: embeddings, scores, targets); layout 2 is
  frequency-major (rows are mel bins: spectrograms). One file per clip, file
  stem = clip id.
* Weights TSV: header ``filename<TAB>weight`` with normalized probabilities.

All writes go through a temp file plus rename, so partially written artifacts
never appear under the target name.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .augment import Spectrogram
from .errors import FormatError, ValidationError
from .resample import EmbeddingSequence
from .timeline import ClassVocabulary, ClipAnnotations, Event, FrameGrid, ScoreMatrix

MAGIC = b"SEDB"
LAYOUT_TIME_MAJOR = 1
LAYOUT_FREQ_MAJOR = 2

ARRAY_SUFFIX = ".sedb"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips the value at single precision."""
    return repr(float(np.float32(x)))


# ---------------------------------------------------------------------------
# binary array container


def write_array(path, values: np.ndarray, layout: int = LAYOUT_TIME_MAJOR) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValidationError(f"array container stores 2-D arrays, got {values.shape}")
    if layout not in (LAYOUT_TIME_MAJOR, LAYOUT_FREQ_MAJOR):
        raise ValidationError(f"unknown layout: {layout}")
    rows, cols = values.shape
    header = MAGIC + struct.pack("<III", layout, rows, cols)
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)


def read_array(path) -> tuple[np.ndarray, int]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16 or data[:4] != MAGIC:
        raise FormatError("not a SEDB array file", path=path)
    layout, rows, cols = struct.unpack("<III", data[4:16])
    if layout not in (LAYOUT_TIME_MAJOR, LAYOUT_FREQ_MAJOR):
        raise FormatError(f"unsupported layout version {layout}", path=path)
    expected = 16 + 4 * rows * cols
    if len(data) != expected:
        raise FormatError(
            f"expected {expected} bytes for {rows}x{cols}, found {len(data)}",
            path=path,
        )
    values = np.frombuffer(data, dtype="<f4", offset=16).reshape(rows, cols)
    return values.astype(np.float64), layout


def write_embedding(path, emb: EmbeddingSequence) -> None:
    write_array(path, emb.values, LAYOUT_TIME_MAJOR)


def read_embedding(path) -> EmbeddingSequence:
    path = Path(path)
    values, layout = read_array(path)
    if layout != LAYOUT_TIME_MAJOR:
        raise FormatError("embedding files must use the time-major layout", path=path)
    return EmbeddingSequence(path.stem, values)


def write_spectrogram(path, spec: Spectrogram) -> None:
    write_array(path, spec.values, LAYOUT_FREQ_MAJOR)


def read_spectrogram(path) -> Spectrogram:
    values, layout = read_array(path)
    if layout != LAYOUT_FREQ_MAJOR:
        raise FormatError("spectrogram files must use the frequency-major layout",
                          path=path)
    return Spectrogram(values)


# ---------------------------------------------------------------------------
# vocabulary


def read_vocabulary(path) -> ClassVocabulary:
    names = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            name = line.rstrip("\n").strip()
            if not name:
                raise FormatError("empty class name", path=path, line=lineno)
            names.append(name)
    if not names:
        raise FormatError("vocabulary file is empty", path=path)
    return ClassVocabulary(tuple(names))


def write_vocabulary(path, vocab: ClassVocabulary) -> None:
    atomic_write_text(path, "".join(f"{n}\n" for n in vocab.names))


# ---------------------------------------------------------------------------
# events TSV


def read_event_rows(path) -> list[tuple[str, float, float, str]]:
    """Low-level tolerant parser: returns (filename, onset, offset, label)
    rows; extra columns are ignored, negative times rejected."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header:
            raise FormatError("missing header row", path=path, line=1)
        cols = header.split("\t")
        try:
            idx = {name: cols.index(name)
                   for name in ("filename", "onset", "offset", "event_label")}
        except ValueError as exc:
            raise FormatError(f"header must name filename/onset/offset/event_label, "
                              f"got {cols}", path=path, line=1) from exc
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < len(cols):
                raise FormatError(f"expected {len(cols)} columns, found {len(parts)}",
                                  path=path, line=lineno)
            def _num(col_name):
                raw = parts[idx[col_name]]
                try:
                    return float(raw)
                except ValueError:
                    raise FormatError(f"bad number {raw!r} in column {col_name!r}",
                                      path=path, line=lineno,
                                      column=idx[col_name] + 1) from None
            onset = _num("onset")
            offset = _num("offset")
            if onset < 0 or offset < 0:
                raise FormatError("negative event time", path=path, line=lineno)
            rows.append((parts[idx["filename"]], onset, offset,
                         parts[idx["event_label"]]))
    return rows


def read_events_tsv(path, vocab: ClassVocabulary, durations=10.0,
                    clamp: bool = False) -> dict[str, ClipAnnotations]:
    """Parse an events TSV into per-clip annotations.

    ``durations`` is either one duration in seconds applied to every clip or a
    mapping from clip id to duration. Labels are resolved against ``vocab``.
    """
    per_clip: dict[str, list[Event]] = {}
    for filename, onset, offset, label in read_event_rows(path):
        clip_id = Path(filename).stem
        per_clip.setdefault(clip_id, []).append(
            Event(vocab.index(label), onset, offset))
    out = {}
    for clip_id, events in per_clip.items():
        dur = durations.get(clip_id) if isinstance(durations, dict) else durations
        if dur is None:
            raise ValidationError(f"no duration known for clip {clip_id!r}")
        out[clip_id] = ClipAnnotations.create(clip_id, float(dur), events, clamp=clamp)
    return out


def write_events_tsv(path, annotations, vocab: ClassVocabulary) -> None:
    lines = ["filename\tonset\toffset\tevent_label"]
    for ann in annotations:
        for ev in sorted(ann.events, key=lambda e: (e.onset, e.offset, e.class_id)):
            lines.append(f"{ann.clip_id}\t{ev.onset!r}\t{ev.offset!r}\t"
                         f"{vocab.names[ev.class_id]}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# per-clip score/target tables


def write_score_tsv(path, sm: ScoreMatrix) -> None:
    r = sm.grid.resolution
    lines = ["onset\toffset\t" + "\t".join(sm.vocabulary.names)]
    for t in range(sm.num_frames):
        # frame boundaries keep full precision; cell values are single-precision
        # interchange like the binary container
        cells = [repr(t * r), repr((t + 1) * r)]
        cells.extend(_fmt(v) for v in sm.scores[t])
        lines.append("\t".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_score_tsv(path, is_logits: bool = False) -> ScoreMatrix:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) < 3 or header[0] != "onset" or header[1] != "offset":
            raise FormatError("score table header must start with onset/offset",
                              path=path, line=1)
        names = tuple(header[2:])
        rows = []
        onsets = []
        offsets = []
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(header):
                raise FormatError(f"expected {len(header)} columns, found {len(parts)}",
                                  path=path, line=lineno)
            try:
                onsets.append(float(parts[0]))
                offsets.append(float(parts[1]))
                rows.append([float(x) for x in parts[2:]])
            except ValueError as exc:
                raise FormatError(f"bad number: {exc}", path=path, line=lineno) from None
    if not rows:
        raise FormatError("score table has no frames", path=path)
    resolution = offsets[0] - onsets[0]
    if not resolution > 0:
        raise FormatError("frame offset must exceed onset", path=path, line=2)
    grid = FrameGrid(resolution, len(rows))
    return ScoreMatrix(grid, ClassVocabulary(names), np.array(rows), is_logits)


def read_scores_dir(path, vocab: ClassVocabulary | None = None,
                    resolution: float = 0.04,
                    is_logits: bool = False) -> dict[str, ScoreMatrix]:
    """Load every per-clip score file in a directory (``.tsv`` tables are
    self-describing; ``.sedb`` arrays need ``vocab`` and ``resolution``)."""
    path = Path(path)
    out: dict[str, ScoreMatrix] = {}
    for entry in sorted(path.iterdir()):
        if entry.stem == "manifest":
            continue
        if entry.suffix == ".tsv":
            out[entry.stem] = read_score_tsv(entry, is_logits)
        elif entry.suffix == ARRAY_SUFFIX:
            if vocab is None:
                raise ValidationError(
                    f"{entry.name}: binary score files need an explicit vocabulary"
                )
            values, layout = read_array(entry)
            if layout != LAYOUT_TIME_MAJOR:
                raise FormatError("score files must use the time-major layout",
                                  path=entry)
            grid = FrameGrid(resolution, values.shape[0])
            out[entry.stem] = ScoreMatrix(grid, vocab, values, is_logits)
    return out


# ---------------------------------------------------------------------------
# sampling weights


def write_weights_tsv(path, weights) -> None:
    lines = ["filename\tweight"]
    for clip_id, w in zip(weights.clip_ids, weights.weights):
        lines.append(f"{clip_id}\t{float(w)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_weights_tsv(path):
    from .distill import SamplingWeights

    ids = []
    values = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header.split("\t")[:2] != ["filename", "weight"]:
            raise FormatError("weights header must be filename<TAB>weight",
                              path=path, line=1)
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise FormatError("expected 2 columns", path=path, line=lineno)
            ids.append(parts[0])
            try:
                values.append(float(parts[1]))
            except ValueError:
                raise FormatError(f"bad weight {parts[1]!r}", path=path,
                                  line=lineno, column=2) from None
    return SamplingWeights.from_raw(ids, values)


# ---------------------------------------------------------------------------
# run manifests


def write_manifest(path, command: str, parameters: dict, seed,
                   input_paths, wall_time_s: float, version: str) -> None:
    """Record how an artifact was produced. Re-running the same command with
    the same inputs and seed reproduces the artifact bytes; ``wall_time_s`` is
    the only field expected to differ between runs."""
    manifest = {
        "command": command,
        "version": version,
        "seed": seed,
        "parameters": {k: v for k, v in sorted(parameters.items())},
        "inputs": {str(p): sha256_file(p) for p in sorted(map(str, input_paths))
                   if os.path.isfile(p)},
        "wall_time_s": wall_time_s,
    }
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")

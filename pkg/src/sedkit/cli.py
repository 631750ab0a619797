"""Command-line interface exposing every pipeline stage as a subcommand.

All randomness flows from the ``--seed`` flag; no wall-clock entropy touches
any output, so two runs with identical inputs, flags, and seed produce
byte-identical artifacts (the run manifest's ``wall_time_s`` field is the one
documented exception). Outputs are written atomically via temp file + rename.
Exit codes: 0 success, 1 validation/contract error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import __version__
from . import io as sio
from .augment import AugmentConfig, Spectrogram, filter_augment, freq_mixstyle, freq_warp
from .augment import mixup as spec_mixup
from .distill import (KdConfig, ProbeConfig, kd_loss, kd_loss_grad,
                      mixup_with_targets, sampling_weights, weighted_sample)
from .distill import probe_fit as _probe_fit
from .errors import (ContractError, NumericError, SedkitError, TrainingError,
                     ValidationError, VocabularyError)
from .evalaux import AsoConfig, OnsetEvalConfig, aso as _aso, median_filter, onset_f
from .psds import PsdsParams, psds as _psds
from .resample import (CANONICAL_FRAMES, EmbeddingSequence, LinearHead,
                       ScheduleConfig, resample)
from .timeline import (ClassVocabulary, ClipAnnotations, Event, FrameGrid,
                       ScoreMatrix, TargetMatrix, project_vocabulary,
                       rasterize_events)


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"


def _emit_report(args, payload) -> None:
    text = _json_text(payload)
    if getattr(args, "report", None):
        sio.atomic_write_text(args.report, text)
    else:
        sys.stdout.write(text)


def _manifest(args, out_path, input_paths, t0) -> None:
    out_path = Path(out_path)
    if out_path.is_dir():
        target = out_path / "manifest.json"
    else:
        target = Path(str(out_path) + ".manifest.json")
    params = {}
    for k, v in vars(args).items():
        if k in ("func",):
            continue
        params[k] = str(v) if isinstance(v, Path) else v
    sio.write_manifest(target, args.command, params, getattr(args, "seed", None),
                       input_paths, time.perf_counter() - t0, __version__)


def _write_score_like(path_base: Path, sm: ScoreMatrix, fmt: str) -> None:
    if fmt == "tsv":
        sio.write_score_tsv(path_base.with_suffix(".tsv"), sm)
    else:
        sio.write_array(path_base.with_suffix(sio.ARRAY_SUFFIX), sm.scores)


def _load_scores(args) -> dict[str, ScoreMatrix]:
    vocab = sio.read_vocabulary(args.vocab) if getattr(args, "vocab", None) else None
    return sio.read_scores_dir(args.scores, vocab=vocab,
                               resolution=getattr(args, "resolution", 0.04))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_rasterize(args) -> int:
    t0 = time.perf_counter()
    vocab = sio.read_vocabulary(args.vocab)
    annotations = sio.read_events_tsv(args.events, vocab,
                                      durations=args.clip_duration,
                                      clamp=args.clamp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = FrameGrid.for_duration(args.clip_duration, args.resolution)
    if not annotations:
        _warn("no events found; nothing to rasterize")
    for clip_id in sorted(annotations):
        targets = rasterize_events(annotations[clip_id], vocab, grid,
                                   overlap_rule=args.overlap_rule,
                                   clamp=args.clamp)
        sm = ScoreMatrix(grid, vocab, targets.values)
        _write_score_like(out / clip_id, sm, args.format)
    _manifest(args, out, [args.events, args.vocab], t0)
    return 0


def _cmd_weights(args) -> int:
    t0 = time.perf_counter()
    vocab = sio.read_vocabulary(args.vocab)
    annotations = sio.read_events_tsv(args.events, vocab,
                                      durations=args.clip_duration,
                                      clamp=args.clamp)
    if not annotations:
        _warn("no events found; writing an empty weights table")
        sio.atomic_write_text(args.out, "filename\tweight\n")
        _manifest(args, Path(args.out), [args.events, args.vocab], t0)
        return 0
    w = sampling_weights(annotations.values(), vocab, aggregate=args.aggregate,
                         empty_policy=args.empty_policy)
    sio.write_weights_tsv(args.out, w)
    _manifest(args, Path(args.out), [args.events, args.vocab], t0)
    return 0


def _cmd_sample(args) -> int:
    t0 = time.perf_counter()
    try:
        weights = sio.read_weights_tsv(args.weights)
    except ValidationError:
        with open(args.weights, encoding="utf-8") as fh:
            non_empty = [ln for ln in fh.read().splitlines()[1:] if ln.strip()]
        if non_empty:
            raise
        _warn("weights table is empty; writing an empty sample list")
        sio.atomic_write_text(args.out, "")
        _manifest(args, Path(args.out), [args.weights], t0)
        return 0
    if args.n == 0:
        _warn("zero draws requested")
    draws = weighted_sample(weights, args.n, args.seed)
    sio.atomic_write_text(args.out, "".join(f"{c}\n" for c in draws))
    _manifest(args, Path(args.out), [args.weights], t0)
    return 0


def _cmd_resample(args) -> int:
    t0 = time.perf_counter()
    src = Path(args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = sorted(src.glob(f"*{sio.ARRAY_SUFFIX}"))
    if not files:
        _warn(f"no {sio.ARRAY_SUFFIX} files in {src}")
    for f in files:
        emb = sio.read_embedding(f)
        sio.write_embedding(out / f.name, resample(emb, args.frames))
    _manifest(args, out, files, t0)
    return 0


def _cmd_distill_targets(args) -> int:
    t0 = time.perf_counter()
    member_dirs = [Path(d) for d in args.inputs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stems: set[str] = set()
    for d in member_dirs:
        stems.update(p.stem for p in d.glob(f"*{sio.ARRAY_SUFFIX}"))
    if not stems:
        _warn("no logit files found in any member directory")
    manifest_rows = ["clip_id\tn_members"]
    inputs = []
    for stem in sorted(stems):
        members = []
        for d in member_dirs:
            p = d / f"{stem}{sio.ARRAY_SUFFIX}"
            if p.exists():
                values, _ = sio.read_array(p)
                members.append(values)
                inputs.append(p)
        shapes = {m.shape for m in members}
        if len(shapes) != 1:
            raise ValidationError(f"clip {stem!r}: member shapes differ: {shapes}")
        soft = expit(np.mean(np.stack(members), axis=0))
        sio.write_array(out / f"{stem}{sio.ARRAY_SUFFIX}", soft)
        manifest_rows.append(f"{stem}\t{len(members)}")
    sio.atomic_write_text(out / "manifest.tsv", "\n".join(manifest_rows) + "\n")
    _manifest(args, out, inputs, t0)
    return 0


def _read_targets_dir(path: Path) -> dict[str, np.ndarray]:
    out = {}
    for entry in sorted(Path(path).iterdir()):
        if entry.stem == "manifest":
            continue
        if entry.suffix == sio.ARRAY_SUFFIX:
            out[entry.stem] = sio.read_array(entry)[0]
        elif entry.suffix == ".tsv":
            out[entry.stem] = sio.read_score_tsv(entry).scores
    return out


def _cmd_probe_train(args) -> int:
    t0 = time.perf_counter()
    if args.loss_only:
        student, _ = sio.read_array(args.student)
        hard, _ = sio.read_array(args.hard)
        soft = sio.read_array(args.soft)[0] if args.soft else hard
        cfg = KdConfig(args.lambda_kd)
        payload = {"kd_loss": kd_loss(student, hard, soft, cfg)}
        if args.with_grad:
            payload["gradient"] = kd_loss_grad(student, hard, soft, cfg).tolist()
        _emit_report(args, payload)
        return 0

    emb_dir = Path(args.embeddings)
    emb_files = sorted(emb_dir.glob(f"*{sio.ARRAY_SUFFIX}"))
    if not emb_files:
        raise ValidationError(f"no embedding files in {emb_dir}")
    hard_map = _read_targets_dir(args.targets)
    soft_map = _read_targets_dir(args.soft) if args.soft else None
    embeddings = []
    hard = []
    soft = [] if soft_map is not None else None
    for f in emb_files:
        if f.stem not in hard_map:
            raise ValidationError(f"no target file for clip {f.stem!r}")
        embeddings.append(resample(sio.read_embedding(f), args.frames))
        hard.append(hard_map[f.stem])
        if soft is not None:
            if f.stem not in soft_map:
                raise ValidationError(f"no soft-target file for clip {f.stem!r}")
            soft.append(soft_map[f.stem])
    schedule = ScheduleConfig(args.peak_lr, args.warmup_steps, args.steps,
                              args.final_lr)
    cfg = ProbeConfig(schedule=schedule, kd=KdConfig(args.lambda_kd),
                      batch_size=args.batch_size, mixup=args.mixup,
                      mixup_alpha=args.mixup_alpha)
    head = _probe_fit(embeddings, hard, soft, cfg, args.seed)
    # bias stored as one extra column next to the weight rows
    packed = np.concatenate([head.weight, head.bias[:, None]], axis=1)
    sio.write_array(args.out, packed)
    z = np.concatenate([e.values @ head.weight.T + head.bias for e in embeddings])
    h = np.concatenate(hard)
    s = np.concatenate(soft) if soft is not None else h
    payload = {"final_loss": kd_loss(z, h, s, cfg.kd), "steps": args.steps,
               "clips": len(embeddings)}
    _emit_report(args, payload)
    _manifest(args, Path(args.out), emb_files, t0)
    return 0


def _cmd_postprocess(args) -> int:
    t0 = time.perf_counter()
    scores = _load_scores(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not scores:
        _warn(f"no score files in {args.scores}")
    for clip_id in sorted(scores):
        filtered = median_filter(scores[clip_id], args.median_filter)
        _write_score_like(out / clip_id, filtered, args.format)
    _manifest(args, out, sorted(Path(args.scores).iterdir()), t0)
    return 0


def _cmd_augment(args) -> int:
    t0 = time.perf_counter()
    cfg = AugmentConfig(mixup_alpha=args.mixup_alpha, fms_alpha=args.fms_alpha,
                        filter_bands=tuple(args.filter_bands),
                        filter_db=tuple(args.filter_db),
                        warp_range=tuple(args.warp_range))
    rng = np.random.default_rng(args.seed)
    inputs = [args.in_a]
    values_a, layout_a = sio.read_array(args.in_a)
    if args.op in ("mixup", "fms"):
        if not args.in_b:
            raise ValidationError(f"--in-b is required for op {args.op!r}")
        inputs.append(args.in_b)
        values_b, layout_b = sio.read_array(args.in_b)
        if layout_b != layout_a:
            raise ValidationError("inputs use different array layouts")
    if args.op == "mixup":
        lam = args.lam if args.lam is not None \
            else float(rng.beta(cfg.mixup_alpha, cfg.mixup_alpha))
        if args.hard_a or args.soft_a:
            if not (args.hard_a and args.hard_b and args.out_hard):
                raise ValidationError(
                    "triple mixup needs --hard-a, --hard-b and --out-hard")
            hard_a = sio.read_array(args.hard_a)[0]
            hard_b = sio.read_array(args.hard_b)[0]
            soft_a = sio.read_array(args.soft_a)[0] if args.soft_a else None
            soft_b = sio.read_array(args.soft_b)[0] if args.soft_b else None
            if (soft_a is None) != (soft_b is None):
                raise ValidationError("--soft-a and --soft-b must come together")
            feats, hard, soft = mixup_with_targets((values_a, hard_a, soft_a),
                                                   (values_b, hard_b, soft_b), lam)
            sio.write_array(args.out, feats, layout_a)
            sio.write_array(args.out_hard, hard)
            if soft is not None:
                if not args.out_soft:
                    raise ValidationError("--out-soft is required with --soft-a/b")
                sio.write_array(args.out_soft, soft)
            inputs.extend(p for p in (args.hard_a, args.hard_b, args.soft_a,
                                      args.soft_b) if p)
        else:
            mixed = lam * values_a + (1.0 - lam) * values_b
            sio.write_array(args.out, mixed, layout_a)
    elif args.op == "fms":
        lam = args.lam if args.lam is not None \
            else float(rng.beta(cfg.fms_alpha, cfg.fms_alpha))
        out = freq_mixstyle(Spectrogram(values_a), Spectrogram(values_b), lam)
        sio.write_array(args.out, out.values, layout_a)
    elif args.op == "filter":
        out = filter_augment(Spectrogram(values_a), cfg, rng)
        sio.write_array(args.out, out.values, layout_a)
    else:  # warp
        out = freq_warp(Spectrogram(values_a), args.scale, rng, cfg.warp_range)
        sio.write_array(args.out, out.values, layout_a)
    _manifest(args, Path(args.out), inputs, t0)
    return 0


def _cmd_eval_psds(args) -> int:
    t0 = time.perf_counter()
    scores = _load_scores(args)
    if not scores:
        raise ValidationError(f"no score files in {args.scores}")
    clip_ids = sorted(scores)
    full_vocab = scores[clip_ids[0]].vocabulary
    eval_vocab = full_vocab
    if args.classes:
        eval_vocab = sio.read_vocabulary(args.classes)
        scores = {cid: project_vocabulary(sm, full_vocab, eval_vocab)
                  for cid, sm in scores.items()}
    annotations: dict[str, ClipAnnotations] = {}
    per_clip_events: dict[str, list[Event]] = {}
    for filename, onset, offset, label in sio.read_event_rows(args.gt):
        clip_id = Path(filename).stem
        if label not in full_vocab:
            raise VocabularyError(f"unknown class name: {label!r}")
        if label not in eval_vocab:
            continue
        if clip_id not in scores:
            raise ValidationError(f"reference clip {clip_id!r} has no score file")
        per_clip_events.setdefault(clip_id, []).append(
            Event(eval_vocab.index(label), onset, offset))
    for clip_id, events in per_clip_events.items():
        duration = scores[clip_id].grid.duration
        annotations[clip_id] = ClipAnnotations.create(clip_id, duration, events,
                                                      clamp=args.clamp)
    params = PsdsParams(rho_dtc=args.dtc, rho_gtc=args.gtc, alpha_st=args.alpha_st,
                        e_max=args.emax, missing_gt=args.missing_gt)
    result = _psds(scores, annotations, params,
                   median_filter_seconds=args.median_filter, threads=args.threads)
    payload = {
        "psds": result.psds,
        "dataset_duration_hours": result.dataset_duration_hours,
        "parameters": {
            "rho_dtc": params.rho_dtc,
            "rho_gtc": params.rho_gtc,
            "alpha_st": params.alpha_st,
            "e_max": params.e_max,
            "missing_gt": params.missing_gt,
            "median_filter_seconds": args.median_filter,
        },
        "num_clips": len(scores),
        "curves": {name: [[x, y] for x, y in pts]
                   for name, pts in result.curves.items()},
    }
    _emit_report(args, payload)
    return 0


def _events_by_clip(path) -> tuple[dict[str, list[tuple[float, float, str]]], set[str]]:
    rows: dict[str, list[tuple[float, float, str]]] = {}
    labels: set[str] = set()
    for filename, onset, offset, label in sio.read_event_rows(path):
        rows.setdefault(Path(filename).stem, []).append((onset, offset, label))
        labels.add(label)
    return rows, labels


def _cmd_eval_onset_f(args) -> int:
    pred_rows, pred_labels = _events_by_clip(args.pred)
    gt_rows, gt_labels = _events_by_clip(args.gt)
    labels = sorted(pred_labels | gt_labels)
    if not labels:
        _warn("no events in either file")
        _emit_report(args, {"precision": 0.0, "recall": 0.0, "f1": 0.0,
                            "tp": 0, "fp": 0, "fn": 0})
        return 0
    vocab = ClassVocabulary(tuple(labels))

    def to_events(rows):
        return {cid: [Event(vocab.index(lbl), on, off) for on, off, lbl in evs]
                for cid, evs in rows.items()}

    scores = onset_f(to_events(pred_rows), to_events(gt_rows),
                     OnsetEvalConfig(args.tolerance))
    _emit_report(args, {"precision": scores.precision, "recall": scores.recall,
                        "f1": scores.f1, "tp": scores.tp, "fp": scores.fp,
                        "fn": scores.fn})
    return 0


def _read_sample_file(path) -> list[float]:
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ValidationError(
                    f"bad number {line!r} in {path} line {lineno}") from None
    return values


def _cmd_aso(args) -> int:
    a = _read_sample_file(args.a)
    b = _read_sample_file(args.b)
    cfg = AsoConfig(alpha=args.alpha, num_comparisons=args.comparisons,
                    bootstrap_samples=args.bootstrap, rng_seed=args.seed,
                    decision_threshold=args.threshold)
    result = _aso(a, b, cfg)
    _emit_report(args, {"epsilon_min": result.epsilon_min,
                        "epsilon_hat": result.epsilon_hat,
                        "significant": result.significant})
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sedkit",
        description="Frame-level sound event detection toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rasterize", help="rasterize strong labels onto a frame grid")
    p.add_argument("--events", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--resolution", type=float, default=0.04)
    p.add_argument("--clip-duration", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("tsv", "binary"), default="tsv")
    p.add_argument("--overlap-rule", choices=("any", "half"), default="any")
    p.add_argument("--clamp", action="store_true")
    p.set_defaults(func=_cmd_rasterize)

    p = sub.add_parser("weights", help="inverse-active-time sampling weights")
    p.add_argument("--events", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--clip-duration", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.add_argument("--aggregate", choices=("sum", "mean"), default="sum")
    p.add_argument("--empty-policy", choices=("skip", "min", "error"), default="skip")
    p.add_argument("--clamp", action="store_true")
    p.set_defaults(func=_cmd_weights)

    p = sub.add_parser("sample", help="weighted sampling of clip ids")
    p.add_argument("--weights", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("augment", help="seeded spectrogram transforms")
    p.add_argument("--op", choices=("mixup", "fms", "filter", "warp"), required=True)
    p.add_argument("--in-a", required=True)
    p.add_argument("--in-b")
    p.add_argument("--out", required=True)
    p.add_argument("--lam", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--hard-a")
    p.add_argument("--hard-b")
    p.add_argument("--soft-a")
    p.add_argument("--soft-b")
    p.add_argument("--out-hard")
    p.add_argument("--out-soft")
    p.add_argument("--mixup-alpha", type=float, default=0.2)
    p.add_argument("--fms-alpha", type=float, default=0.3)
    p.add_argument("--filter-bands", type=int, nargs=2, default=(2, 5))
    p.add_argument("--filter-db", type=float, nargs=2, default=(-6.0, 6.0))
    p.add_argument("--warp-range", type=float, nargs=2, default=(0.9, 1.1))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("resample", help="resample embeddings to a fixed frame count")
    p.add_argument("--input", required=True)
    p.add_argument("--frames", type=int, default=CANONICAL_FRAMES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_resample)

    p = sub.add_parser("distill-targets",
                       help="average member logits into soft targets")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_distill_targets)

    p = sub.add_parser("probe-train", help="train a linear probe on embeddings")
    p.add_argument("--embeddings")
    p.add_argument("--targets")
    p.add_argument("--soft")
    p.add_argument("--frames", type=int, default=CANONICAL_FRAMES)
    p.add_argument("--lambda", dest="lambda_kd", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--peak-lr", type=float, default=0.5)
    p.add_argument("--warmup-steps", type=int, default=100)
    p.add_argument("--final-lr", type=float, default=0.0)
    p.add_argument("--mixup", action="store_true")
    p.add_argument("--mixup-alpha", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--report")
    p.add_argument("--loss-only", action="store_true",
                   help="evaluate the loss on explicit arrays instead of training")
    p.add_argument("--student")
    p.add_argument("--hard")
    p.add_argument("--with-grad", action="store_true")
    p.set_defaults(func=_cmd_probe_train)

    p = sub.add_parser("postprocess", help="median-filter frame scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--median-filter", type=float, default=0.48)
    p.add_argument("--vocab")
    p.add_argument("--resolution", type=float, default=0.04)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("tsv", "binary"), default="tsv")
    p.set_defaults(func=_cmd_postprocess)

    p = sub.add_parser("eval-psds", help="threshold-independent detection score")
    p.add_argument("--scores", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--dtc", type=float, default=0.7)
    p.add_argument("--gtc", type=float, default=0.7)
    p.add_argument("--emax", type=float, default=100.0)
    p.add_argument("--alpha-st", type=float, default=0.0)
    p.add_argument("--classes")
    p.add_argument("--median-filter", type=float)
    p.add_argument("--missing-gt", choices=("tpr_one", "exclude"), default="tpr_one")
    p.add_argument("--vocab")
    p.add_argument("--resolution", type=float, default=0.04)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--clamp", action="store_true")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_eval_psds)

    p = sub.add_parser("eval-onset-f", help="onset F-measure with tolerance")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_eval_onset_f)

    p = sub.add_parser("aso", help="almost-stochastic-order significance test")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--comparisons", type=int, default=1)
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_aso)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, NumericError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

/**
 * Bound operations.
 *
 * Every function marshals its arrays into the toolkit's file formats inside a
 * private temp directory, invokes one CLI subcommand, and parses the result
 * back. Numbers round-trip exactly: JSON reports carry shortest round-trip
 * decimals and binary containers carry IEEE-754 f32 payloads, which widen to
 * f64 losslessly (inputs are checked for single-precision representability up
 * front, so nothing is truncated silently).
 */

import { readFileSync } from "node:fs";
import { mkdirSync } from "node:fs";
import { join } from "node:path";

import {
  LAYOUT_FREQ_MAJOR,
  LAYOUT_TIME_MAJOR,
  readArray,
  writeArray,
} from "./container.js";
import {
  RunOptions,
  parseWeightsTsv,
  runToolkit,
  withWorkspace,
  writeEventsTsv,
  writeVocabulary,
  writeWeightsTsv,
} from "./runner.js";
import {
  EventRecord,
  Matrix,
  ShapeDtypeError,
  Weights,
  checkMatrix,
} from "./types.js";

export interface MarshalOptions extends RunOptions {
  /** Permit lossy f64 -> f32 quantization when writing array files. */
  allowRounding?: boolean;
}

function genericVocabulary(cols: number): string[] {
  return Array.from({ length: cols }, (_, i) =>
    `c${i.toString().padStart(3, "0")}`,
  );
}

// ---------------------------------------------------------------------------
// sampling

export interface SamplingWeightsOptions extends RunOptions {
  clipDuration?: number;
  aggregate?: "sum" | "mean";
  emptyPolicy?: "skip" | "min" | "error";
}

/** Inverse-active-time sampling weights from labelled events. */
export function samplingWeights(
  events: EventRecord[],
  vocabulary: string[],
  options: SamplingWeightsOptions = {},
): Weights {
  if (events.length === 0) {
    throw new ShapeDtypeError("events must not be empty", "events");
  }
  return withWorkspace((dir) => {
    writeEventsTsv(join(dir, "events.tsv"), events);
    writeVocabulary(join(dir, "vocab.txt"), vocabulary);
    const out = join(dir, "weights.tsv");
    runToolkit(
      [
        "weights",
        "--events", join(dir, "events.tsv"),
        "--vocab", join(dir, "vocab.txt"),
        "--clip-duration", String(options.clipDuration ?? 10),
        "--aggregate", options.aggregate ?? "sum",
        "--empty-policy", options.emptyPolicy ?? "skip",
        "--out", out,
      ],
      options,
    );
    return parseWeightsTsv(readFileSync(out, "utf-8"));
  });
}

/** Seeded weighted draws with replacement; O(1) per draw in the toolkit. */
export function weightedSample(
  weights: Weights,
  n: number,
  seed: number,
  options: RunOptions = {},
): string[] {
  if (weights.clipIds.length !== weights.weights.length) {
    throw new ShapeDtypeError("one weight per clip id is required", "weights");
  }
  if (!Number.isInteger(n) || n < 0) {
    throw new ShapeDtypeError(`draw count must be a non-negative integer: ${n}`, "n");
  }
  return withWorkspace((dir) => {
    writeWeightsTsv(join(dir, "weights.tsv"), weights);
    const out = join(dir, "samples.txt");
    runToolkit(
      [
        "sample",
        "--weights", join(dir, "weights.tsv"),
        "--n", String(n),
        "--seed", String(seed),
        "--out", out,
      ],
      options,
    );
    const text = readFileSync(out, "utf-8");
    return text.length === 0 ? [] : text.replace(/\n$/, "").split("\n");
  });
}

// ---------------------------------------------------------------------------
// distillation loss

function lossReport(
  student: Matrix,
  hard: Matrix,
  soft: Matrix | null,
  lambdaKd: number,
  withGrad: boolean,
  options: MarshalOptions,
): { kd_loss: number; gradient?: number[][] } {
  checkMatrix(student, "student");
  checkMatrix(hard, "hard");
  if (soft !== null) checkMatrix(soft, "soft");
  return withWorkspace((dir) => {
    const allow = options.allowRounding ?? false;
    writeArray(join(dir, "student.sedb"), student, "student", LAYOUT_TIME_MAJOR, allow);
    writeArray(join(dir, "hard.sedb"), hard, "hard", LAYOUT_TIME_MAJOR, allow);
    const args = [
      "probe-train", "--loss-only",
      "--student", join(dir, "student.sedb"),
      "--hard", join(dir, "hard.sedb"),
      "--lambda", String(lambdaKd),
      "--report", join(dir, "loss.json"),
    ];
    if (soft !== null) {
      writeArray(join(dir, "soft.sedb"), soft, "soft", LAYOUT_TIME_MAJOR, allow);
      args.push("--soft", join(dir, "soft.sedb"));
    }
    if (withGrad) args.push("--with-grad");
    runToolkit(args, options);
    return JSON.parse(readFileSync(join(dir, "loss.json"), "utf-8"));
  });
}

/** Mixed hard/soft frame-level binary cross-entropy (mean reduction). */
export function kdLoss(
  student: Matrix,
  hard: Matrix,
  soft: Matrix | null = null,
  lambdaKd = 0.5,
  options: MarshalOptions = {},
): number {
  return lossReport(student, hard, soft, lambdaKd, false, options).kd_loss;
}

/** Analytic gradient of {@link kdLoss} with respect to the logits. */
export function kdLossGrad(
  student: Matrix,
  hard: Matrix,
  soft: Matrix | null = null,
  lambdaKd = 0.5,
  options: MarshalOptions = {},
): Matrix {
  const report = lossReport(student, hard, soft, lambdaKd, true, options);
  const rows = report.gradient!;
  const data = new Float64Array(student.rows * student.cols);
  rows.forEach((row, i) => data.set(row, i * student.cols));
  return { rows: student.rows, cols: student.cols, data };
}

// ---------------------------------------------------------------------------
// mixup

export interface MixupTriple {
  features: Matrix;
  hard: Matrix;
  soft?: Matrix | null;
}

export interface MixupOptions extends MarshalOptions {
  /** Container layout for the feature arrays (default: frequency-major). */
  featuresLayout?: number;
}

/** Mix two (features, hard, soft) triples as lam*a + (1-lam)*b. */
export function mixupWithTargets(
  a: MixupTriple,
  b: MixupTriple,
  lam: number,
  options: MixupOptions = {},
): MixupTriple {
  checkMatrix(a.features, "a.features");
  checkMatrix(b.features, "b.features");
  checkMatrix(a.hard, "a.hard");
  checkMatrix(b.hard, "b.hard");
  const softA = a.soft ?? null;
  const softB = b.soft ?? null;
  if ((softA === null) !== (softB === null)) {
    throw new ShapeDtypeError(
      "soft targets must be present in both triples or neither", "soft");
  }
  if (softA !== null) checkMatrix(softA, "a.soft");
  if (softB !== null) checkMatrix(softB, "b.soft");
  const layout = options.featuresLayout ?? LAYOUT_FREQ_MAJOR;
  const allow = options.allowRounding ?? false;
  return withWorkspace((dir) => {
    writeArray(join(dir, "fa.sedb"), a.features, "a.features", layout, allow);
    writeArray(join(dir, "fb.sedb"), b.features, "b.features", layout, allow);
    writeArray(join(dir, "ha.sedb"), a.hard, "a.hard", LAYOUT_TIME_MAJOR, allow);
    writeArray(join(dir, "hb.sedb"), b.hard, "b.hard", LAYOUT_TIME_MAJOR, allow);
    const args = [
      "augment", "--op", "mixup",
      "--in-a", join(dir, "fa.sedb"),
      "--in-b", join(dir, "fb.sedb"),
      "--hard-a", join(dir, "ha.sedb"),
      "--hard-b", join(dir, "hb.sedb"),
      "--lam", String(lam),
      "--out", join(dir, "fm.sedb"),
      "--out-hard", join(dir, "hm.sedb"),
    ];
    if (softA !== null && softB !== null) {
      writeArray(join(dir, "sa.sedb"), softA, "a.soft", LAYOUT_TIME_MAJOR, allow);
      writeArray(join(dir, "sb.sedb"), softB, "b.soft", LAYOUT_TIME_MAJOR, allow);
      args.push("--soft-a", join(dir, "sa.sedb"),
                "--soft-b", join(dir, "sb.sedb"),
                "--out-soft", join(dir, "sm.sedb"));
    }
    runToolkit(args, options);
    const out: MixupTriple = {
      features: readArray(join(dir, "fm.sedb")).matrix,
      hard: readArray(join(dir, "hm.sedb")).matrix,
      soft: null,
    };
    if (softA !== null) {
      out.soft = readArray(join(dir, "sm.sedb")).matrix;
    }
    return out;
  });
}

// ---------------------------------------------------------------------------
// score postprocessing / resampling

export interface MedianFilterOptions extends MarshalOptions {
  resolution?: number;
}

/** Per-class running-median smoothing of frame scores. */
export function medianFilter(
  scores: Matrix,
  windowSeconds: number,
  options: MedianFilterOptions = {},
): Matrix {
  checkMatrix(scores, "scores");
  return withWorkspace((dir) => {
    const scoresDir = join(dir, "scores");
    mkdirSync(scoresDir);
    writeArray(join(scoresDir, "clip.sedb"), scores, "scores",
               LAYOUT_TIME_MAJOR, options.allowRounding ?? false);
    writeVocabulary(join(dir, "vocab.txt"), genericVocabulary(scores.cols));
    const outDir = join(dir, "out");
    runToolkit(
      [
        "postprocess",
        "--scores", scoresDir,
        "--vocab", join(dir, "vocab.txt"),
        "--resolution", String(options.resolution ?? 0.04),
        "--median-filter", String(windowSeconds),
        "--out", outDir,
        "--format", "binary",
      ],
      options,
    );
    return readArray(join(outDir, "clip.sedb")).matrix;
  });
}

/** Resample an embedding sequence to a fixed frame count (default 250). */
export function resample(
  embedding: Matrix,
  outFrames = 250,
  options: MarshalOptions = {},
): Matrix {
  checkMatrix(embedding, "embedding");
  return withWorkspace((dir) => {
    const inDir = join(dir, "in");
    mkdirSync(inDir);
    writeArray(join(inDir, "clip.sedb"), embedding, "embedding",
               LAYOUT_TIME_MAJOR, options.allowRounding ?? false);
    const outDir = join(dir, "out");
    runToolkit(
      [
        "resample",
        "--input", inDir,
        "--frames", String(outFrames),
        "--out", outDir,
      ],
      options,
    );
    return readArray(join(outDir, "clip.sedb")).matrix;
  });
}

// ---------------------------------------------------------------------------
// evaluation

export interface PsdsOptions extends MarshalOptions {
  resolution?: number;
  rhoDtc?: number;
  rhoGtc?: number;
  alphaSt?: number;
  eMax?: number;
  medianFilterSeconds?: number;
  missingGt?: "tpr_one" | "exclude";
  threads?: number;
}

export interface PsdsReport {
  psds: number;
  datasetDurationHours: number;
  curves: Record<string, [number, number][]>;
}

/** Threshold-independent intersection-criterion detection score. */
export function psds(
  scoresByClip: Record<string, Matrix>,
  events: EventRecord[],
  vocabulary: string[],
  options: PsdsOptions = {},
): PsdsReport {
  const clipIds = Object.keys(scoresByClip);
  if (clipIds.length === 0) {
    throw new ShapeDtypeError("scoresByClip must not be empty", "scoresByClip");
  }
  for (const cid of clipIds) {
    const m = scoresByClip[cid];
    checkMatrix(m, `scoresByClip[${cid}]`);
    if (m.cols !== vocabulary.length) {
      throw new ShapeDtypeError(
        `scoresByClip[${cid}] has ${m.cols} columns but the vocabulary ` +
          `names ${vocabulary.length} classes`,
        `scoresByClip[${cid}]`,
      );
    }
  }
  return withWorkspace((dir) => {
    const scoresDir = join(dir, "scores");
    mkdirSync(scoresDir);
    for (const cid of clipIds) {
      writeArray(join(scoresDir, `${cid}.sedb`), scoresByClip[cid],
                 `scoresByClip[${cid}]`, LAYOUT_TIME_MAJOR,
                 options.allowRounding ?? false);
    }
    writeVocabulary(join(dir, "vocab.txt"), vocabulary);
    writeEventsTsv(join(dir, "gt.tsv"), events);
    const report = join(dir, "report.json");
    const args = [
      "eval-psds",
      "--scores", scoresDir,
      "--gt", join(dir, "gt.tsv"),
      "--vocab", join(dir, "vocab.txt"),
      "--resolution", String(options.resolution ?? 0.04),
      "--dtc", String(options.rhoDtc ?? 0.7),
      "--gtc", String(options.rhoGtc ?? 0.7),
      "--emax", String(options.eMax ?? 100),
      "--alpha-st", String(options.alphaSt ?? 0),
      "--missing-gt", options.missingGt ?? "tpr_one",
      "--threads", String(options.threads ?? 1),
      "--report", report,
    ];
    if (options.medianFilterSeconds !== undefined) {
      args.push("--median-filter", String(options.medianFilterSeconds));
    }
    runToolkit(args, options);
    const parsed = JSON.parse(readFileSync(report, "utf-8"));
    return {
      psds: parsed.psds,
      datasetDurationHours: parsed.dataset_duration_hours,
      curves: parsed.curves,
    };
  });
}

export interface OnsetFReport {
  precision: number;
  recall: number;
  f1: number;
  tp: number;
  fp: number;
  fn: number;
}

/** Micro-averaged onset F-measure with |onset difference| <= tolerance. */
export function onsetF(
  predicted: EventRecord[],
  reference: EventRecord[],
  tolerance = 0.05,
  options: RunOptions = {},
): OnsetFReport {
  return withWorkspace((dir) => {
    writeEventsTsv(join(dir, "pred.tsv"), predicted);
    writeEventsTsv(join(dir, "gt.tsv"), reference);
    const report = join(dir, "report.json");
    runToolkit(
      [
        "eval-onset-f",
        "--pred", join(dir, "pred.tsv"),
        "--gt", join(dir, "gt.tsv"),
        "--tolerance", String(tolerance),
        "--report", report,
      ],
      options,
    );
    return JSON.parse(readFileSync(report, "utf-8"));
  });
}

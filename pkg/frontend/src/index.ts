/**
 * Node/TypeScript client for the sedkit sound event detection toolkit.
 *
 * Exposes the toolkit's core numerical operations as module-level functions
 * over typed arrays. Calls marshal through the toolkit's documented file
 * formats and CLI; results are numerically identical to running the toolkit
 * directly (bit-exact for values representable at the single-precision
 * interchange format, which includes everything the toolkit itself emits).
 */

export {
  LAYOUT_FREQ_MAJOR,
  LAYOUT_TIME_MAJOR,
  encodeArray,
  readArray,
  writeArray,
} from "./container.js";
export {
  kdLoss,
  kdLossGrad,
  medianFilter,
  mixupWithTargets,
  onsetF,
  psds,
  resample,
  samplingWeights,
  weightedSample,
} from "./ops.js";
export type {
  MarshalOptions,
  MedianFilterOptions,
  MixupOptions,
  MixupTriple,
  OnsetFReport,
  PsdsOptions,
  PsdsReport,
  SamplingWeightsOptions,
} from "./ops.js";
export { runToolkit, toolkitCommand, withWorkspace } from "./runner.js";
export type { RunOptions } from "./runner.js";
export {
  ShapeDtypeError,
  ToolkitProcessError,
  matrix,
  matrixFromRows,
  quantizeToSingle,
  toRows,
} from "./types.js";
export type { EventRecord, Matrix, Weights } from "./types.js";

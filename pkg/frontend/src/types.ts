/**
 * Shared value types and typed errors.
 *
 * Numeric payloads travel as row-major Float64Array views; the toolkit's file
 * interchange is single-precision, so marshalling refuses values that a
 * 32-bit float cannot represent exactly unless rounding is requested
 * explicitly (never silently).
 */

/** Row-major 2-D array view over a 64-bit float buffer. */
export interface Matrix {
  rows: number;
  cols: number;
  data: Float64Array;
}

/** One labelled event row of an events table. */
export interface EventRecord {
  filename: string;
  onset: number;
  offset: number;
  label: string;
}

/** Normalized clip-sampling distribution. */
export interface Weights {
  clipIds: string[];
  weights: number[];
}

/** Shape or element-type contract violation; names the offending argument. */
export class ShapeDtypeError extends Error {
  constructor(message: string, readonly argument: string) {
    super(message);
    this.name = "ShapeDtypeError";
  }
}

/** The toolkit process exited with a failure code. */
export class ToolkitProcessError extends Error {
  constructor(
    message: string,
    readonly exitCode: number | null,
    readonly stderr: string,
  ) {
    super(message);
    this.name = "ToolkitProcessError";
  }
}

/** Build a matrix view, validating shape against the buffer length. */
export function matrix(
  rows: number,
  cols: number,
  values: Float64Array | number[],
): Matrix {
  const data =
    values instanceof Float64Array ? values : Float64Array.from(values);
  if (data.length !== rows * cols) {
    throw new ShapeDtypeError(
      `buffer of length ${data.length} does not hold ${rows}x${cols} values`,
      "values",
    );
  }
  return { rows, cols, data };
}

/** Nested-array convenience constructor. */
export function matrixFromRows(rows: number[][]): Matrix {
  const r = rows.length;
  const c = r > 0 ? rows[0].length : 0;
  const data = new Float64Array(r * c);
  rows.forEach((row, i) => {
    if (row.length !== c) {
      throw new ShapeDtypeError(`row ${i} has ${row.length} values, expected ${c}`, "rows");
    }
    data.set(row, i * c);
  });
  return { rows: r, cols: c, data };
}

export function toRows(m: Matrix): number[][] {
  const out: number[][] = [];
  for (let i = 0; i < m.rows; i++) {
    out.push(Array.from(m.data.subarray(i * m.cols, (i + 1) * m.cols)));
  }
  return out;
}

/** Quantize to the single-precision interchange grid (explicit, not silent). */
export function quantizeToSingle(m: Matrix): Matrix {
  const data = new Float64Array(m.data.length);
  for (let i = 0; i < m.data.length; i++) data[i] = Math.fround(m.data[i]);
  return { rows: m.rows, cols: m.cols, data };
}

/** Validate a matrix argument: dtype, shape consistency, placement. */
export function checkMatrix(m: Matrix, argument: string): void {
  if (!m || !(m.data instanceof Float64Array)) {
    throw new ShapeDtypeError(
      `${argument} must carry a Float64Array (64-bit) buffer`,
      argument,
    );
  }
  if (
    !Number.isInteger(m.rows) ||
    !Number.isInteger(m.cols) ||
    m.rows < 1 ||
    m.cols < 1
  ) {
    throw new ShapeDtypeError(
      `${argument} has invalid shape ${m.rows}x${m.cols}`,
      argument,
    );
  }
  if (m.data.length !== m.rows * m.cols) {
    throw new ShapeDtypeError(
      `${argument} buffer length ${m.data.length} != ${m.rows}x${m.cols}`,
      argument,
    );
  }
}

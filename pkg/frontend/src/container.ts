/**
 * The toolkit's binary array container: magic "SEDB", little-endian u32
 * layout (1 = time-major, 2 = frequency-major), u32 rows, u32 cols, then
 * rows*cols IEEE-754 f32 values row-major.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { Matrix, ShapeDtypeError, checkMatrix } from "./types.js";

export const LAYOUT_TIME_MAJOR = 1;
export const LAYOUT_FREQ_MAJOR = 2;

const MAGIC = Buffer.from("SEDB", "ascii");

/**
 * Serialize a matrix into container bytes.
 *
 * The container stores 32-bit floats; values that are not exactly
 * representable at single precision are rejected unless `allowRounding` is
 * set, so precision is never dropped silently.
 */
export function encodeArray(
  m: Matrix,
  argument: string,
  layout: number = LAYOUT_TIME_MAJOR,
  allowRounding = false,
): Buffer {
  checkMatrix(m, argument);
  if (!allowRounding) {
    for (let i = 0; i < m.data.length; i++) {
      const v = m.data[i];
      if (!Number.isFinite(v) || Math.fround(v) !== v) {
        throw new ShapeDtypeError(
          `${argument}[${Math.floor(i / m.cols)},${i % m.cols}] = ${v} is not ` +
            "exactly representable in the single-precision interchange " +
            "format; quantizeToSingle() it or pass allowRounding",
          argument,
        );
      }
    }
  }
  const header = Buffer.alloc(16);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(layout, 4);
  header.writeUInt32LE(m.rows, 8);
  header.writeUInt32LE(m.cols, 12);
  const payload = Buffer.alloc(4 * m.data.length);
  for (let i = 0; i < m.data.length; i++) {
    payload.writeFloatLE(Math.fround(m.data[i]), 4 * i);
  }
  return Buffer.concat([header, payload]);
}

export function writeArray(
  path: string,
  m: Matrix,
  argument: string,
  layout: number = LAYOUT_TIME_MAJOR,
  allowRounding = false,
): void {
  writeFileSync(path, encodeArray(m, argument, layout, allowRounding));
}

/** Read a container file; f32 payload widens to f64 exactly. */
export function readArray(path: string): { matrix: Matrix; layout: number } {
  const raw = readFileSync(path);
  if (raw.length < 16 || !raw.subarray(0, 4).equals(MAGIC)) {
    throw new ShapeDtypeError(`${path} is not a SEDB array file`, "path");
  }
  const layout = raw.readUInt32LE(4);
  const rows = raw.readUInt32LE(8);
  const cols = raw.readUInt32LE(12);
  if (raw.length !== 16 + 4 * rows * cols) {
    throw new ShapeDtypeError(
      `${path}: expected ${16 + 4 * rows * cols} bytes for ${rows}x${cols}, ` +
        `found ${raw.length}`,
      "path",
    );
  }
  const data = new Float64Array(rows * cols);
  for (let i = 0; i < data.length; i++) {
    data[i] = raw.readFloatLE(16 + 4 * i);
  }
  return { matrix: { rows, cols, data }, layout };
}

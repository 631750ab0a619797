import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import {
  LAYOUT_FREQ_MAJOR,
  ShapeDtypeError,
  ToolkitProcessError,
  kdLoss,
  matrix,
  matrixFromRows,
  quantizeToSingle,
  readArray,
  weightedSample,
  writeArray,
} from "../src/index.js";
import type { Matrix } from "../src/index.js";

const scratch = mkdtempSync(join(tmpdir(), "sedkit-client-test-"));
afterAll(() => rmSync(scratch, { recursive: true, force: true }));

describe("typed argument checking", () => {
  it("rejects a 32-bit buffer where 64-bit is required, naming the argument", () => {
    const bad = {
      rows: 1,
      cols: 2,
      data: new Float32Array([0.5, 0.5]),
    } as unknown as Matrix;
    const good = matrixFromRows([[1, 0]]);
    try {
      kdLoss(bad, good, null, 0.5);
      expect.unreachable("expected a typed error");
    } catch (err) {
      expect(err).toBeInstanceOf(ShapeDtypeError);
      expect((err as ShapeDtypeError).argument).toBe("student");
      expect((err as ShapeDtypeError).message).toContain("64-bit");
    }
  });

  it("rejects shape/buffer mismatches", () => {
    expect(() => matrix(2, 2, [1, 2, 3])).toThrow(ShapeDtypeError);
    expect(() => matrixFromRows([[1, 2], [3]])).toThrow(ShapeDtypeError);
  });

  it("refuses silent truncation to the interchange format", () => {
    const m = matrixFromRows([[0.1]]); // 0.1 is not f32-representable
    expect(() => writeArray(join(scratch, "x.sedb"), m, "m")).toThrow(
      ShapeDtypeError,
    );
    // explicit quantization is the documented way in
    const q = quantizeToSingle(m);
    writeArray(join(scratch, "x.sedb"), q, "m");
    const back = readArray(join(scratch, "x.sedb"));
    expect(back.matrix.data[0]).toBe(Math.fround(0.1));
    // or explicit opt-in rounding
    writeArray(join(scratch, "y.sedb"), m, "m", LAYOUT_FREQ_MAJOR, true);
    expect(readArray(join(scratch, "y.sedb")).layout).toBe(LAYOUT_FREQ_MAJOR);
  });

  it("container round-trips f32-representable doubles exactly", () => {
    const m = matrixFromRows([[0.5, 1.25], [-3.75, 1024.0]]);
    writeArray(join(scratch, "rt.sedb"), m, "m");
    const back = readArray(join(scratch, "rt.sedb")).matrix;
    expect(Array.from(back.data)).toEqual(Array.from(m.data));
  });
});

describe("toolkit failure propagation", () => {
  it("surfaces toolkit validation errors with stderr attached", () => {
    try {
      weightedSample({ clipIds: ["a"], weights: [-1.0] }, 5, 0);
      expect.unreachable("expected a process error");
    } catch (err) {
      expect(err).toBeInstanceOf(ToolkitProcessError);
      expect((err as ToolkitProcessError).exitCode).toBe(1);
      expect((err as ToolkitProcessError).stderr).toContain("error");
    }
  });

  it("rejects negative draw counts before spawning", () => {
    expect(() =>
      weightedSample({ clipIds: ["a"], weights: [1.0] }, -1, 0),
    ).toThrow(ShapeDtypeError);
  });
});

/**
 * Process plumbing: temp workspaces, table writers, and toolkit invocation.
 *
 * The toolkit is driven strictly through its documented external surface
 * (subcommands plus TSV/binary file formats). The command defaults to
 * `python3 -m sedkit` and can be overridden with the SEDKIT_CLI environment
 * variable (whitespace-separated) or per call.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { EventRecord, ToolkitProcessError, Weights } from "./types.js";

export interface RunOptions {
  /** Override the toolkit command, e.g. ["python3", "-m", "sedkit"]. */
  command?: string[];
}

export function toolkitCommand(options?: RunOptions): string[] {
  if (options?.command?.length) return options.command;
  const env = process.env.SEDKIT_CLI;
  if (env && env.trim()) return env.trim().split(/\s+/);
  return ["python3", "-m", "sedkit"];
}

export function runToolkit(args: string[], options?: RunOptions): string {
  const [cmd, ...prefix] = toolkitCommand(options);
  const result = spawnSync(cmd, [...prefix, ...args], {
    encoding: "utf-8",
    maxBuffer: 1 << 28,
  });
  if (result.error) {
    throw new ToolkitProcessError(
      `failed to launch toolkit (${cmd}): ${result.error.message}`,
      null,
      "",
    );
  }
  if (result.status !== 0) {
    throw new ToolkitProcessError(
      `toolkit exited with code ${result.status}: ${result.stderr.trim()}`,
      result.status,
      result.stderr,
    );
  }
  return result.stdout;
}

/** Run `body` with a private temp directory, removed afterwards. */
export function withWorkspace<T>(body: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "sedkit-client-"));
  try {
    return body(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

export function writeEventsTsv(path: string, events: EventRecord[]): void {
  const lines = ["filename\tonset\toffset\tevent_label"];
  for (const ev of events) {
    lines.push(`${ev.filename}\t${ev.onset}\t${ev.offset}\t${ev.label}`);
  }
  writeFileSync(path, lines.join("\n") + "\n");
}

export function writeVocabulary(path: string, names: string[]): void {
  writeFileSync(path, names.map((n) => `${n}\n`).join(""));
}

export function writeWeightsTsv(path: string, weights: Weights): void {
  const lines = ["filename\tweight"];
  weights.clipIds.forEach((cid, i) => {
    lines.push(`${cid}\t${weights.weights[i]}`);
  });
  writeFileSync(path, lines.join("\n") + "\n");
}

export function parseWeightsTsv(text: string): Weights {
  const lines = text.split("\n").filter((l) => l.length > 0);
  const clipIds: string[] = [];
  const weights: number[] = [];
  for (const line of lines.slice(1)) {
    const [cid, w] = line.split("\t");
    clipIds.push(cid);
    weights.push(Number(w));
  }
  return { clipIds, weights };
}

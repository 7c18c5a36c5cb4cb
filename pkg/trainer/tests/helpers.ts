/** Shared fixtures: toy patch sets, artifact writers, and a python bridge. */

import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { mulberry32 } from "../src/rng";

/** Creates a fresh temporary directory. */
export function makeTmpDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), `${prefix}-`));
}

export function removeDir(dir: string): void {
  fs.rmSync(dir, { recursive: true, force: true });
}

/** Writes a patch stack file (SPTC layout, no config-hash footer). */
export function writeSptcFile(file: string, pixels: Uint8Array, count: number,
                              side: number): void {
  const header = Buffer.alloc(13);
  header.write("SPTC", 0, "latin1");
  header.writeUInt16LE(1, 4);
  header.writeUInt32LE(count, 6);
  header.writeUInt16LE(side, 10);
  header.writeUInt8(1, 12);
  fs.mkdirSync(path.dirname(file), { recursive: true });
  fs.writeFileSync(file, Buffer.concat([header, Buffer.from(pixels)]));
}

/** Writes a surrogate label file (SLBL layout, no version field). */
export function writeSlblFile(file: string, labels: Uint32Array): void {
  const buf = Buffer.alloc(8 + labels.length * 4);
  buf.write("SLBL", 0, "latin1");
  buf.writeUInt32LE(labels.length, 4);
  for (let i = 0; i < labels.length; i++) {
    buf.writeUInt32LE(labels[i], 8 + i * 4);
  }
  fs.mkdirSync(path.dirname(file), { recursive: true });
  fs.writeFileSync(file, buf);
}

export interface ToyPatchSet {
  pixels: Uint8Array;
  labels: Uint32Array;
  count: number;
  side: number;
}

/**
 * Builds a two-class texture toy set: horizontal versus vertical stripes
 * with random phase and moderate pixel noise. Classes alternate by index.
 */
export function makeStripePatchSet(count: number, seed: number,
                                   side = 32): ToyPatchSet {
  const rand = mulberry32(seed);
  const pixels = new Uint8Array(count * side * side);
  const labels = new Uint32Array(count);
  for (let i = 0; i < count; i++) {
    const cls = i % 2;
    labels[i] = cls;
    const phase = Math.floor(rand() * 8);
    const base = i * side * side;
    for (let r = 0; r < side; r++) {
      for (let c = 0; c < side; c++) {
        const along = (cls === 0 ? r : c) + phase;
        const level = along % 8 < 4 ? 64 : 192;
        const noisy = level + Math.round((rand() - 0.5) * 96);
        pixels[base + r * side + c] = Math.max(0, Math.min(255, noisy));
      }
    }
  }
  return { pixels, labels, count, side };
}

/** Writes patches.sptc, labels.slbl, and meta.csv into a directory. */
export function writeSurrogateDir(dir: string, set: ToyPatchSet,
                                  withMeta = true): string {
  fs.mkdirSync(dir, { recursive: true });
  writeSptcFile(path.join(dir, "patches.sptc"), set.pixels, set.count,
                set.side);
  writeSlblFile(path.join(dir, "labels.slbl"), set.labels);
  if (withMeta) {
    const lines = ["image_id,keypoint_index,label"];
    for (let i = 0; i < set.count; i++) {
      lines.push(`pages/w${i % 4}_p0.png,${i},${set.labels[i]}`);
    }
    fs.writeFileSync(path.join(dir, "meta.csv"), lines.join("\n") + "\n");
  }
  return dir;
}

/** Runs a python snippet and returns its stdout. */
export function runPython(code: string): string {
  return execFileSync("python3", ["-c", code], { encoding: "utf-8" });
}

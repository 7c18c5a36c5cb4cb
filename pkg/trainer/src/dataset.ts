/** Surrogate dataset loading, label remapping, and train/validation split. */

import * as path from "node:path";
import * as fs from "node:fs";

import { DatasetError } from "./errors";
import { MetaRow, readMetaCsv, readSlbl, readSptc } from "./format";
import { mulberry32, shuffleInPlace } from "./rng";

/** Validation patches are capped to this fraction of small datasets. */
export const VAL_FRACTION_CAP = 0.2;

export interface SurrogateData {
  /** Row-major 8-bit pixels, `count * side * side` long. */
  pixels: Uint8Array;
  count: number;
  side: number;
  /** Contiguous class ids in `[0, classCount)`. */
  labels: Int32Array;
  classCount: number;
  /** Maps each contiguous class id back to its original cluster label. */
  labelMap: number[];
  /** Per-patch provenance rows, when `meta.csv` is present. */
  meta: MetaRow[] | null;
}

export interface RemappedLabels {
  labels: Int32Array;
  classCount: number;
  labelMap: number[];
  /** True when the original labels left gaps that had to be closed. */
  remapped: boolean;
}

/**
 * Maps raw cluster labels onto contiguous class ids `[0, classCount)`.
 * Cluster vocabularies are much larger than the set of labels that survive
 * filtering, so sparsely populated label ranges are the common case; a
 * warning reports the collapse.
 */
export function remapLabels(raw: Uint32Array): RemappedLabels {
  const distinct = Array.from(new Set(raw)).sort((a, b) => a - b);
  const classCount = distinct.length;
  const toClass = new Map<number, number>();
  distinct.forEach((label, index) => toClass.set(label, index));
  const labels = new Int32Array(raw.length);
  for (let i = 0; i < raw.length; i++) {
    labels[i] = toClass.get(raw[i])!;
  }
  const impliedClasses = classCount > 0 ? distinct[classCount - 1] + 1 : 0;
  const remapped = impliedClasses !== classCount;
  if (remapped) {
    console.warn(
      `labels imply ${impliedClasses} surrogate classes but only ` +
      `${classCount} are populated; remapping to ${classCount} contiguous ` +
      "classes");
  }
  return { labels, classCount, labelMap: distinct, remapped };
}

/**
 * Loads `patches.sptc`, `labels.slbl`, and (when present) `meta.csv` from a
 * surrogate dataset directory, remapping labels to contiguous class ids.
 */
export function loadSurrogateDirectory(dir: string): SurrogateData {
  const stack = readSptc(path.join(dir, "patches.sptc"));
  const { labels: rawLabels } = readSlbl(path.join(dir, "labels.slbl"));
  if (rawLabels.length !== stack.count) {
    throw new DatasetError(
      `${dir}: ${stack.count} patches but ${rawLabels.length} labels`);
  }
  const metaPath = path.join(dir, "meta.csv");
  let meta: MetaRow[] | null = null;
  if (fs.existsSync(metaPath)) {
    meta = readMetaCsv(metaPath);
    if (meta.length !== stack.count) {
      throw new DatasetError(
        `${dir}: ${stack.count} patches but ${meta.length} metadata rows`);
    }
    for (let i = 0; i < meta.length; i++) {
      if (meta[i].label !== rawLabels[i]) {
        throw new DatasetError(
          `${dir}: metadata row ${i} has label ${meta[i].label}, ` +
          `label file says ${rawLabels[i]}`);
      }
    }
  }
  const { labels, classCount, labelMap } = remapLabels(rawLabels);
  return {
    pixels: stack.pixels,
    count: stack.count,
    side: stack.side,
    labels,
    classCount,
    labelMap,
    meta,
  };
}

export interface SplitIndices {
  train: number[];
  val: number[];
}

/**
 * Splits `count` patch indices into disjoint training and validation sets.
 * The validation set holds `valSize` random patches, capped to a fifth of
 * the dataset so small datasets keep enough training signal.
 */
export function splitTrainVal(count: number, valSize: number,
                              seed: number): SplitIndices {
  const valCount = Math.min(valSize, Math.floor(count * VAL_FRACTION_CAP));
  const order = Array.from({ length: count }, (_, i) => i);
  shuffleInPlace(order, mulberry32(seed));
  return {
    val: order.slice(0, valCount).sort((a, b) => a - b),
    train: order.slice(valCount).sort((a, b) => a - b),
  };
}

export interface PixelStats {
  mean: number;
  std: number;
}

/**
 * Computes the mean and standard deviation of the selected patches'
 * pixels on the [0, 1] scale, for input standardization.
 */
export function pixelStats(pixels: Uint8Array, side: number,
                           indices: number[]): PixelStats {
  const perPatch = side * side;
  let sum = 0;
  let sumSq = 0;
  for (const index of indices) {
    const base = index * perPatch;
    for (let i = 0; i < perPatch; i++) {
      const v = pixels[base + i] / 255;
      sum += v;
      sumSq += v * v;
    }
  }
  const n = Math.max(1, indices.length * perPatch);
  const mean = sum / n;
  const variance = Math.max(0, sumSq / n - mean * mean);
  return { mean, std: Math.max(Math.sqrt(variance), 1e-6) };
}

/**
 * Fills `out` with the standardized pixels of the given patches, laid out
 * as one NHWC batch with a single channel.
 */
export function fillBatch(pixels: Uint8Array, side: number, indices: number[],
                          stats: PixelStats, out: Float32Array): void {
  const perPatch = side * side;
  if (out.length < indices.length * perPatch) {
    throw new RangeError("batch buffer too small");
  }
  for (let b = 0; b < indices.length; b++) {
    const src = indices[b] * perPatch;
    const dst = b * perPatch;
    for (let i = 0; i < perPatch; i++) {
      out[dst + i] = (pixels[src + i] / 255 - stats.mean) / stats.std;
    }
  }
}

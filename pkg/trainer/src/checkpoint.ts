/** Checkpoint directory format: model topology, weights, and trainer state.
 *
 * A checkpoint directory holds `model.json` (layer topology plus weight
 * manifest), `weights.bin` (raw little-endian weight data), and
 * `trainer.json` (patch geometry, class mapping, and the input
 * standardization constants needed to reproduce training preprocessing).
 */

import * as fs from "node:fs";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { CheckpointError } from "./errors";
import { writeFileAtomic } from "./format";

export const CHECKPOINT_VERSION = 1;

export interface CheckpointInfo {
  formatVersion: number;
  /** Residual depth of the network. */
  layers: number;
  /** Patch side length the model was trained on. */
  patchSide: number;
  classCount: number;
  /** Maps contiguous class ids back to original cluster labels. */
  labelMap: number[];
  embeddingDim: number;
  /** Pixel standardization constants on the [0, 1] scale. */
  pixelMean: number;
  pixelStd: number;
  seed: number;
}

const MODEL_FILE = "model.json";
const WEIGHTS_FILE = "weights.bin";
const INFO_FILE = "trainer.json";

/** Serializes a model and its trainer state into `dir`. */
export async function saveCheckpoint(model: tf.LayersModel,
                                     info: CheckpointInfo,
                                     dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  let captured: tf.io.ModelArtifacts | null = null;
  await model.save(tf.io.withSaveHandler(async (artifacts) => {
    captured = artifacts;
    return {
      modelArtifactsInfo: {
        dateSaved: new Date(),
        modelTopologyType: "JSON" as const,
      },
    };
  }));
  const artifacts = captured as unknown as tf.io.ModelArtifacts;
  const weightData = artifacts.weightData!;
  const parts = Array.isArray(weightData) ? weightData : [weightData];
  const weights = Buffer.concat(parts.map((part) => Buffer.from(part)));
  writeFileAtomic(path.join(dir, MODEL_FILE), Buffer.from(JSON.stringify({
    modelTopology: artifacts.modelTopology,
    weightSpecs: artifacts.weightSpecs,
  })));
  writeFileAtomic(path.join(dir, WEIGHTS_FILE), weights);
  writeFileAtomic(path.join(dir, INFO_FILE),
                  Buffer.from(JSON.stringify(info, null, 2) + "\n"));
}

function readJson(file: string): unknown {
  let text: string;
  try {
    text = fs.readFileSync(file, "utf-8");
  } catch (err) {
    throw new CheckpointError(`cannot read ${file}: ${(err as Error).message}`);
  }
  try {
    return JSON.parse(text);
  } catch (err) {
    throw new CheckpointError(`${file}: invalid JSON`);
  }
}

/** Loads a checkpoint directory back into a live model. */
export async function loadCheckpoint(
    dir: string): Promise<{ model: tf.LayersModel; info: CheckpointInfo }> {
  const info = readJson(path.join(dir, INFO_FILE)) as CheckpointInfo;
  if (info.formatVersion !== CHECKPOINT_VERSION) {
    throw new CheckpointError(
      `${dir}: unsupported checkpoint version ${info.formatVersion}`);
  }
  const manifest = readJson(path.join(dir, MODEL_FILE)) as {
    modelTopology: object;
    weightSpecs: tf.io.WeightsManifestEntry[];
  };
  let weightBuf: Buffer;
  try {
    weightBuf = fs.readFileSync(path.join(dir, WEIGHTS_FILE));
  } catch (err) {
    throw new CheckpointError(
      `cannot read ${path.join(dir, WEIGHTS_FILE)}: ${(err as Error).message}`);
  }
  const weightData = weightBuf.buffer.slice(
    weightBuf.byteOffset, weightBuf.byteOffset + weightBuf.byteLength);
  const model = await tf.loadLayersModel(tf.io.fromMemory({
    modelTopology: manifest.modelTopology,
    weightSpecs: manifest.weightSpecs,
    weightData,
  }));
  return { model, info };
}

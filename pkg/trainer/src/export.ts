/** Export of penultimate-layer activations as local descriptor files.
 *
 * Each input patch stack produces one `LDSC` file whose row `i` holds the
 * 64-D embedding of patch `i`, so descriptor rows stay aligned with the
 * keypoint order of the originating image. Inference runs in eval mode,
 * which makes the export deterministic and independent of batch
 * composition.
 */

import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { BackendName, initBackend } from "./backend";
import { CheckpointInfo, loadCheckpoint } from "./checkpoint";
import { CheckpointError } from "./errors";
import { PatchStack, readSptc, writeLdsc } from "./format";

export interface ExportOptions {
  batchSize?: number;
  backend?: BackendName;
}

export interface ExportedFile {
  input: string;
  output: string;
  rows: number;
}

export interface ExportResult {
  files: ExportedFile[];
  embeddingDim: number;
  backend: BackendName;
}

/** Computes embeddings for every patch in the stack, in order. */
function embedStack(model: tf.LayersModel, info: CheckpointInfo,
                    stack: PatchStack, batchSize: number): Float32Array {
  const perPatch = stack.side * stack.side;
  const out = new Float32Array(stack.count * info.embeddingDim);
  const buffer = new Float32Array(batchSize * perPatch);
  for (let start = 0; start < stack.count; start += batchSize) {
    const size = Math.min(batchSize, stack.count - start);
    for (let b = 0; b < size; b++) {
      const src = (start + b) * perPatch;
      const dst = b * perPatch;
      for (let i = 0; i < perPatch; i++) {
        buffer[dst + i] =
          (stack.pixels[src + i] / 255 - info.pixelMean) / info.pixelStd;
      }
    }
    const embedding = tf.tidy(() => {
      const x = tf.tensor4d(buffer.subarray(0, size * perPatch),
                            [size, stack.side, stack.side, 1]);
      const outputs = model.apply(x, { training: false }) as tf.Tensor[];
      return outputs[outputs.length - 1];
    });
    if (embedding.shape[1] !== info.embeddingDim) {
      throw new CheckpointError(
        `model produced ${embedding.shape[1]}-D embeddings, checkpoint ` +
        `declares ${info.embeddingDim}`);
    }
    out.set(embedding.dataSync() as Float32Array,
            start * info.embeddingDim);
    embedding.dispose();
  }
  return out;
}

/**
 * Loads the checkpoint in `checkpointDir`, embeds every patch of every
 * input `SPTC` file, and writes one `LDSC` file per input into `outDir`.
 */
export async function exportActivations(
    checkpointDir: string, sptcFiles: string[], outDir: string,
    options: ExportOptions = {}): Promise<ExportResult> {
  const batchSize = options.batchSize ?? 256;
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    throw new RangeError(`batchSize must be a positive integer, got ${batchSize}`);
  }
  const backend = await initBackend(options.backend ?? "wasm");
  const { model, info } = await loadCheckpoint(checkpointDir);
  try {
    const files: ExportedFile[] = [];
    for (const input of sptcFiles) {
      const stack = readSptc(input);
      if (stack.side !== info.patchSide) {
        throw new CheckpointError(
          `${input}: geometry mismatch, checkpoint expects ` +
          `${info.patchSide}x${info.patchSide} patches, file has ` +
          `${stack.side}x${stack.side}`);
      }
      const values = embedStack(model, info, stack, batchSize);
      for (let i = 0; i < values.length; i++) {
        if (!(values[i] >= 0)) {
          throw new CheckpointError(
            `${input}: negative embedding value; the pooled activations ` +
            "should be non-negative");
        }
      }
      const base = path.basename(input).replace(/\.sptc$/, "");
      const output = path.join(outDir, `${base}.ldsc`);
      writeLdsc(output, values, stack.count, info.embeddingDim);
      files.push({ input, output, rows: stack.count });
    }
    return { files, embeddingDim: info.embeddingDim, backend };
  } finally {
    model.dispose();
  }
}

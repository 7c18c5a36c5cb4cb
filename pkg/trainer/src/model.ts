/** Pre-activation residual network for patch classification.
 *
 * Three stages of widths 16/32/64 with `(depth - 2) / 6` residual blocks
 * per stage. Each block applies BN -> ReLU -> conv twice; downsampling
 * blocks use a strided 1x1 projection on the shortcut. A final BN -> ReLU
 * feeds global average pooling, whose 64-wide output is the embedding used
 * as a local descriptor, followed by a linear classifier. Pooling after the
 * ReLU keeps the embedding non-negative.
 */

import * as tf from "@tensorflow/tfjs";

export const STAGE_WIDTHS = [16, 32, 64];

/** Width of the penultimate (embedding) layer. */
export const EMBEDDING_DIM = STAGE_WIDTHS[STAGE_WIDTHS.length - 1];

export const SUPPORTED_DEPTHS = [20, 44];

const BN_MOMENTUM = 0.9;
const BN_EPSILON = 1e-5;

/** Hands out distinct deterministic initializer seeds for one model. */
class SeedSequence {
  private next: number;

  constructor(seed: number) {
    this.next = (seed >>> 0) * 1000003 + 1;
  }

  take(): number {
    return this.next++;
  }
}

function convLayer(filters: number, kernelSize: number, stride: number,
                   seeds: SeedSequence, name: string) {
  return tf.layers.conv2d({
    filters,
    kernelSize,
    strides: stride,
    padding: "same",
    useBias: false,
    kernelInitializer: tf.initializers.heNormal({ seed: seeds.take() }),
    name,
  });
}

function preActivation(x: tf.SymbolicTensor, name: string): tf.SymbolicTensor {
  const bn = tf.layers.batchNormalization({
    momentum: BN_MOMENTUM,
    epsilon: BN_EPSILON,
    name: `${name}_bn`,
  }).apply(x) as tf.SymbolicTensor;
  return tf.layers.activation({
    activation: "relu",
    name: `${name}_relu`,
  }).apply(bn) as tf.SymbolicTensor;
}

function residualBlock(x: tf.SymbolicTensor, width: number, stride: number,
                       seeds: SeedSequence, name: string): tf.SymbolicTensor {
  const first = preActivation(x, `${name}_a`);
  let y = convLayer(width, 3, stride, seeds, `${name}_conv_a`)
    .apply(first) as tf.SymbolicTensor;
  const second = preActivation(y, `${name}_b`);
  y = convLayer(width, 3, 1, seeds, `${name}_conv_b`)
    .apply(second) as tf.SymbolicTensor;
  let shortcut = x;
  if (stride !== 1 || x.shape[x.shape.length - 1] !== width) {
    shortcut = convLayer(width, 1, stride, seeds, `${name}_proj`)
      .apply(x) as tf.SymbolicTensor;
  }
  return tf.layers.add({ name: `${name}_add` })
    .apply([y, shortcut]) as tf.SymbolicTensor;
}

/**
 * Builds the classifier. The model has two outputs: class logits and the
 * 64-D embedding that precedes them.
 */
export function buildPatchClassifier(depth: number, classCount: number,
                                     side: number, seed = 0): tf.LayersModel {
  if (!SUPPORTED_DEPTHS.includes(depth)) {
    throw new RangeError(
      `depth must be one of ${SUPPORTED_DEPTHS.join(", ")}, got ${depth}`);
  }
  if (classCount < 2) {
    throw new RangeError(`classCount must be at least 2, got ${classCount}`);
  }
  const blocksPerStage = (depth - 2) / 6;
  const seeds = new SeedSequence(seed);
  const input = tf.input({ shape: [side, side, 1], name: "patch" });
  let x = convLayer(STAGE_WIDTHS[0], 3, 1, seeds, "stem")
    .apply(input) as tf.SymbolicTensor;
  for (let stage = 0; stage < STAGE_WIDTHS.length; stage++) {
    for (let block = 0; block < blocksPerStage; block++) {
      const stride = stage > 0 && block === 0 ? 2 : 1;
      x = residualBlock(x, STAGE_WIDTHS[stage], stride, seeds,
                        `stage${stage}_block${block}`);
    }
  }
  x = preActivation(x, "head");
  const embedding = tf.layers.globalAveragePooling2d({ name: "embedding" })
    .apply(x) as tf.SymbolicTensor;
  const logits = tf.layers.dense({
    units: classCount,
    kernelInitializer: tf.initializers.glorotUniform({ seed: seeds.take() }),
    name: "logits",
  }).apply(embedding) as tf.SymbolicTensor;
  return tf.model({
    inputs: input,
    outputs: [logits, embedding],
    name: `patch_classifier_${depth}`,
  });
}

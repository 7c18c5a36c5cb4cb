/** Training loop for the residual patch classifier.
 *
 * Stochastic gradient descent with Nesterov momentum and L2 weight decay
 * on convolution and dense kernels. After every epoch the model is
 * evaluated on a held-out validation split; the validation error drives
 * the adaptive learning-rate schedule and early stopping. The run writes a
 * checkpoint directory, a JSON training log, and a training-curve CSV.
 */

import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { BackendName, initBackend } from "./backend";
import { CHECKPOINT_VERSION, saveCheckpoint } from "./checkpoint";
import {
  PixelStats,
  SurrogateData,
  fillBatch,
  loadSurrogateDirectory,
  pixelStats,
  splitTrainVal,
} from "./dataset";
import { DatasetError } from "./errors";
import { writeFileAtomic } from "./format";
import { EMBEDDING_DIM, SUPPORTED_DEPTHS, buildPatchClassifier } from "./model";
import { AdaptiveLrSchedule } from "./schedule";
import { mulberry32, shuffleInPlace } from "./rng";

export const CURVE_FILE = "training_curve.csv";
export const LOG_FILE = "training_log.json";

export interface TrainerConfig {
  /** Residual depth, 20 or 44. */
  layers: number;
  maxEpochs: number;
  batchSize: number;
  /** Initial learning rate of the adaptive schedule. */
  learningRate: number;
  /** Nesterov momentum coefficient. */
  momentum: number;
  /** L2 penalty applied to convolution and dense kernels. */
  weightDecay: number;
  /** Patches held out for validation (capped on small datasets). */
  valSize: number;
  seed: number;
}

export const DEFAULT_TRAINER_CONFIG: TrainerConfig = {
  layers: 20,
  maxEpochs: 50,
  batchSize: 128,
  learningRate: 0.1,
  momentum: 0.9,
  weightDecay: 1e-4,
  valSize: 20000,
  seed: 0,
};

export interface TrainOptions {
  backend?: BackendName;
}

export interface EpochStats {
  epoch: number;
  /** Learning rate in effect during the epoch. */
  learningRate: number;
  trainLoss: number;
  trainAccuracy: number;
  valError: number | null;
  seconds: number;
}

export interface TrainResult {
  config: TrainerConfig;
  backend: BackendName;
  patchCount: number;
  trainCount: number;
  valCount: number;
  classCount: number;
  patchSide: number;
  epochs: EpochStats[];
  stoppedEarly: boolean;
  learningRateDrops: number;
  bestTrainAccuracy: number;
  bestValError: number | null;
  wallSeconds: number;
}

function validateConfig(cfg: TrainerConfig): void {
  if (!SUPPORTED_DEPTHS.includes(cfg.layers)) {
    throw new RangeError(
      `layers must be one of ${SUPPORTED_DEPTHS.join(", ")}, got ${cfg.layers}`);
  }
  if (!Number.isInteger(cfg.maxEpochs) || cfg.maxEpochs < 1) {
    throw new RangeError(`maxEpochs must be a positive integer, got ${cfg.maxEpochs}`);
  }
  if (!Number.isInteger(cfg.batchSize) || cfg.batchSize < 1) {
    throw new RangeError(`batchSize must be a positive integer, got ${cfg.batchSize}`);
  }
  if (!Number.isInteger(cfg.valSize) || cfg.valSize < 0) {
    throw new RangeError(`valSize must be a non-negative integer, got ${cfg.valSize}`);
  }
  if (!Number.isInteger(cfg.seed)) {
    throw new RangeError(`seed must be an integer, got ${cfg.seed}`);
  }
  if (!(cfg.learningRate > 0)) {
    throw new RangeError(`learningRate must be positive, got ${cfg.learningRate}`);
  }
  if (!(cfg.momentum >= 0 && cfg.momentum < 1)) {
    throw new RangeError(`momentum must be in [0, 1), got ${cfg.momentum}`);
  }
  if (!(cfg.weightDecay >= 0)) {
    throw new RangeError(`weightDecay must be non-negative, got ${cfg.weightDecay}`);
  }
}

/** Computes eval-mode classification accuracy over the given indices. */
function evaluateAccuracy(model: tf.LayersModel, data: SurrogateData,
                          indices: number[], stats: PixelStats,
                          batchSize: number): number {
  if (indices.length === 0) {
    return Number.NaN;
  }
  const perPatch = data.side * data.side;
  const buffer = new Float32Array(batchSize * perPatch);
  let correct = 0;
  for (let start = 0; start < indices.length; start += batchSize) {
    const batch = indices.slice(start, start + batchSize);
    fillBatch(data.pixels, data.side, batch, stats, buffer);
    const predictions = tf.tidy(() => {
      const x = tf.tensor4d(buffer.subarray(0, batch.length * perPatch),
                            [batch.length, data.side, data.side, 1]);
      const [logits] = model.apply(x, { training: false }) as tf.Tensor[];
      return tf.argMax(logits, 1);
    });
    const predicted = predictions.dataSync();
    predictions.dispose();
    for (let i = 0; i < batch.length; i++) {
      if (predicted[i] === data.labels[batch[i]]) {
        correct++;
      }
    }
  }
  return correct / indices.length;
}

function writeCurveCsv(file: string, epochs: EpochStats[]): void {
  const lines = ["epoch,learning_rate,train_loss,train_accuracy,val_error"];
  for (const row of epochs) {
    lines.push([
      row.epoch,
      row.learningRate,
      row.trainLoss,
      row.trainAccuracy,
      row.valError === null ? "" : row.valError,
    ].join(","));
  }
  writeFileAtomic(file, Buffer.from(lines.join("\n") + "\n"));
}

/**
 * Trains a patch classifier on the surrogate dataset in `surrogateDir` and
 * writes the checkpoint, training log, and training curve to
 * `checkpointDir`.
 */
export async function train(surrogateDir: string, checkpointDir: string,
                            overrides: Partial<TrainerConfig> = {},
                            options: TrainOptions = {}): Promise<TrainResult> {
  const cfg: TrainerConfig = { ...DEFAULT_TRAINER_CONFIG, ...overrides };
  validateConfig(cfg);
  const started = Date.now();
  const backend = await initBackend(options.backend ?? "wasm");

  const data = loadSurrogateDirectory(surrogateDir);
  if (data.classCount < 2) {
    throw new DatasetError(
      `surrogate dataset has ${data.classCount} class(es); ` +
      "training needs at least 2");
  }
  const split = splitTrainVal(data.count, cfg.valSize, cfg.seed);
  if (split.train.length === 0) {
    throw new DatasetError("no training patches after the validation split");
  }
  const stats = pixelStats(data.pixels, data.side, split.train);

  const model = buildPatchClassifier(cfg.layers, data.classCount, data.side,
                                     cfg.seed);
  const optimizer = tf.train.momentum(cfg.learningRate, cfg.momentum, true);
  const schedule = new AdaptiveLrSchedule(cfg.learningRate);
  const kernels = model.trainableWeights.filter(
    (weight) => weight.name.includes("kernel"));
  const halfDecay = cfg.weightDecay / 2;

  const perPatch = data.side * data.side;
  const batchBuffer = new Float32Array(cfg.batchSize * perPatch);
  const shuffleRand = mulberry32(cfg.seed ^ 0x9e3779b9);
  const order = split.train.slice();

  const epochs: EpochStats[] = [];
  let stoppedEarly = false;

  for (let epoch = 1; epoch <= cfg.maxEpochs; epoch++) {
    const epochStarted = Date.now();
    const epochLr = schedule.learningRate;
    shuffleInPlace(order, shuffleRand);

    let lossSum = 0;
    for (let start = 0; start < order.length; start += cfg.batchSize) {
      const batch = order.slice(start, start + cfg.batchSize);
      fillBatch(data.pixels, data.side, batch, stats, batchBuffer);
      const batchLabels = new Int32Array(batch.length);
      for (let i = 0; i < batch.length; i++) {
        batchLabels[i] = data.labels[batch[i]];
      }
      const x = tf.tensor4d(batchBuffer.subarray(0, batch.length * perPatch),
                            [batch.length, data.side, data.side, 1]);
      const y = tf.oneHot(tf.tensor1d(batchLabels, "int32"), data.classCount);
      const loss = optimizer.minimize(() => {
        const [logits] = model.apply(x, { training: true }) as tf.Tensor[];
        const crossEntropy = tf.losses.softmaxCrossEntropy(y, logits);
        const decay = kernels
          .map((weight) => tf.sum(tf.square(weight.read())))
          .reduce((a, b) => tf.add(a, b));
        return tf.add(crossEntropy, tf.mul(tf.scalar(halfDecay), decay));
      }, true) as tf.Scalar;
      lossSum += loss.dataSync()[0] * batch.length;
      tf.dispose([loss, x, y]);
    }

    const trainAccuracy = evaluateAccuracy(model, data, split.train, stats,
                                           cfg.batchSize);
    const valError = split.val.length > 0
      ? 1 - evaluateAccuracy(model, data, split.val, stats, cfg.batchSize)
      : null;

    epochs.push({
      epoch,
      learningRate: epochLr,
      trainLoss: lossSum / order.length,
      trainAccuracy,
      valError,
      seconds: (Date.now() - epochStarted) / 1000,
    });

    if (valError !== null) {
      const step = schedule.observe(valError);
      if (step.dropped) {
        optimizer.setLearningRate(schedule.learningRate);
      }
      if (step.stop) {
        stoppedEarly = epoch < cfg.maxEpochs;
        break;
      }
    }
  }

  await saveCheckpoint(model, {
    formatVersion: CHECKPOINT_VERSION,
    layers: cfg.layers,
    patchSide: data.side,
    classCount: data.classCount,
    labelMap: data.labelMap,
    embeddingDim: EMBEDDING_DIM,
    pixelMean: stats.mean,
    pixelStd: stats.std,
    seed: cfg.seed,
  }, checkpointDir);

  const result: TrainResult = {
    config: cfg,
    backend,
    patchCount: data.count,
    trainCount: split.train.length,
    valCount: split.val.length,
    classCount: data.classCount,
    patchSide: data.side,
    epochs,
    stoppedEarly,
    learningRateDrops: schedule.drops,
    bestTrainAccuracy: Math.max(...epochs.map((row) => row.trainAccuracy)),
    bestValError: split.val.length > 0
      ? Math.min(...epochs.map((row) => row.valError as number))
      : null,
    wallSeconds: (Date.now() - started) / 1000,
  };

  writeCurveCsv(path.join(checkpointDir, CURVE_FILE), epochs);
  writeFileAtomic(path.join(checkpointDir, LOG_FILE),
                  Buffer.from(JSON.stringify({
                    ...result,
                    labelMap: data.labelMap,
                  }, null, 2) + "\n"));

  optimizer.dispose();
  model.dispose();
  return result;
}

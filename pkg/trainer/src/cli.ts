#!/usr/bin/env node
/** Command-line interface for training and descriptor export.
 *
 * `train <surrogate_dir> <checkpoint_dir>` trains the patch classifier on
 * an exported surrogate dataset. `export <checkpoint_dir> <out_dir>
 * <patches.sptc...>` writes one local-descriptor file per patch stack.
 * Errors print `error: ...` on stderr and exit with status 2.
 */

import { parseArgs } from "node:util";

import { BackendName } from "./backend";
import { exportActivations } from "./export";
import { DEFAULT_TRAINER_CONFIG, TrainerConfig, train } from "./train";

const USAGE = `usage: scriptoria-trainer <command> ...

commands:
  train <surrogate_dir> <checkpoint_dir> [options]
      --layers N           residual depth, 20 or 44 (default ${DEFAULT_TRAINER_CONFIG.layers})
      --max-epochs N       epoch budget (default ${DEFAULT_TRAINER_CONFIG.maxEpochs})
      --batch-size N       minibatch size (default ${DEFAULT_TRAINER_CONFIG.batchSize})
      --learning-rate X    initial learning rate (default ${DEFAULT_TRAINER_CONFIG.learningRate})
      --momentum X         Nesterov momentum (default ${DEFAULT_TRAINER_CONFIG.momentum})
      --weight-decay X     kernel L2 penalty (default ${DEFAULT_TRAINER_CONFIG.weightDecay})
      --val-size N         held-out validation patches (default ${DEFAULT_TRAINER_CONFIG.valSize})
      --seed N             random seed (default ${DEFAULT_TRAINER_CONFIG.seed})
      --backend NAME       wasm or cpu (default wasm)
  export <checkpoint_dir> <out_dir> <patches.sptc...> [options]
      --batch-size N       inference batch size (default 256)
      --backend NAME       wasm or cpu (default wasm)
`;

function numberFlag(name: string, raw: string | undefined,
                    integer: boolean): number | undefined {
  if (raw === undefined) {
    return undefined;
  }
  const value = Number(raw);
  if (!Number.isFinite(value) || (integer && !Number.isInteger(value))) {
    throw new RangeError(`--${name} expects a${integer ? "n integer" : " number"}, got ${raw}`);
  }
  return value;
}

function backendFlag(raw: string | undefined): BackendName | undefined {
  if (raw === undefined) {
    return undefined;
  }
  if (raw !== "wasm" && raw !== "cpu") {
    throw new RangeError(`--backend must be wasm or cpu, got ${raw}`);
  }
  return raw;
}

async function runTrain(args: string[]): Promise<number> {
  const parsed = parseArgs({
    args,
    allowPositionals: true,
    options: {
      "layers": { type: "string" },
      "max-epochs": { type: "string" },
      "batch-size": { type: "string" },
      "learning-rate": { type: "string" },
      "momentum": { type: "string" },
      "weight-decay": { type: "string" },
      "val-size": { type: "string" },
      "seed": { type: "string" },
      "backend": { type: "string" },
    },
  });
  if (parsed.positionals.length !== 2) {
    throw new RangeError(
      "train expects <surrogate_dir> <checkpoint_dir>");
  }
  const [surrogateDir, checkpointDir] = parsed.positionals;
  const overrides: Partial<TrainerConfig> = {};
  const v = parsed.values;
  const set = <K extends keyof TrainerConfig>(key: K,
                                              value: number | undefined) => {
    if (value !== undefined) {
      overrides[key] = value;
    }
  };
  set("layers", numberFlag("layers", v["layers"], true));
  set("maxEpochs", numberFlag("max-epochs", v["max-epochs"], true));
  set("batchSize", numberFlag("batch-size", v["batch-size"], true));
  set("learningRate", numberFlag("learning-rate", v["learning-rate"], false));
  set("momentum", numberFlag("momentum", v["momentum"], false));
  set("weightDecay", numberFlag("weight-decay", v["weight-decay"], false));
  set("valSize", numberFlag("val-size", v["val-size"], true));
  set("seed", numberFlag("seed", v["seed"], true));

  const result = await train(surrogateDir, checkpointDir, overrides,
                             { backend: backendFlag(v["backend"]) });
  const last = result.epochs[result.epochs.length - 1];
  console.log(
    `trained ${result.epochs.length} epoch(s) on ${result.trainCount} ` +
    `patches (${result.classCount} classes, backend ${result.backend})`);
  console.log(
    `final train accuracy ${last.trainAccuracy.toFixed(4)}` +
    (last.valError !== null
      ? `, val error ${last.valError.toFixed(4)}` : "") +
    (result.stoppedEarly ? ", stopped early" : ""));
  console.log(`checkpoint written to ${checkpointDir}`);
  return 0;
}

async function runExport(args: string[]): Promise<number> {
  const parsed = parseArgs({
    args,
    allowPositionals: true,
    options: {
      "batch-size": { type: "string" },
      "backend": { type: "string" },
    },
  });
  if (parsed.positionals.length < 3) {
    throw new RangeError(
      "export expects <checkpoint_dir> <out_dir> <patches.sptc...>");
  }
  const [checkpointDir, outDir, ...sptcFiles] = parsed.positionals;
  const result = await exportActivations(checkpointDir, sptcFiles, outDir, {
    batchSize: numberFlag("batch-size", parsed.values["batch-size"], true),
    backend: backendFlag(parsed.values["backend"]),
  });
  for (const file of result.files) {
    console.log(`${file.output}: ${file.rows} x ${result.embeddingDim}`);
  }
  return 0;
}

/** Runs the CLI and returns the process exit code. */
export async function runCli(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (command === "train") {
      return await runTrain(rest);
    }
    if (command === "export") {
      return await runExport(rest);
    }
    if (command === undefined || command === "--help" || command === "-h") {
      console.log(USAGE);
      return command === undefined ? 2 : 0;
    }
    process.stderr.write(`error: unknown command ${command}\n`);
    return 2;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 2;
  }
}

if (require.main === module) {
  runCli(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}

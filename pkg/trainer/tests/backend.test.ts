import * as tf from "@tensorflow/tfjs";
import { beforeAll, describe, expect, it } from "vitest";

import { conv2dFilterGradient, initBackend } from "../src/backend";
import { mulberry32 } from "../src/rng";

type PadMode = "same" | "valid";

interface ConvCase {
  batch: number;
  height: number;
  width: number;
  inChannels: number;
  kernel: number;
  outChannels: number;
  stride: number;
  pad: PadMode;
}

const CASES: ConvCase[] = [
  { batch: 2, height: 5, width: 5, inChannels: 2, kernel: 3, outChannels: 3, stride: 1, pad: "same" },
  { batch: 2, height: 6, width: 6, inChannels: 2, kernel: 3, outChannels: 3, stride: 2, pad: "same" },
  { batch: 1, height: 7, width: 5, inChannels: 2, kernel: 3, outChannels: 2, stride: 2, pad: "same" },
  { batch: 2, height: 6, width: 6, inChannels: 3, kernel: 1, outChannels: 4, stride: 2, pad: "same" },
  { batch: 2, height: 8, width: 8, inChannels: 2, kernel: 3, outChannels: 3, stride: 1, pad: "valid" },
  { batch: 1, height: 9, width: 7, inChannels: 2, kernel: 3, outChannels: 2, stride: 2, pad: "valid" },
];

function outAndPad(size: number, kernel: number, stride: number,
                   pad: PadMode): { out: number; before: number } {
  if (pad === "same") {
    const out = Math.ceil(size / stride);
    const total = Math.max(0, (out - 1) * stride + kernel - size);
    return { out, before: Math.floor(total / 2) };
  }
  return { out: Math.floor((size - kernel) / stride) + 1, before: 0 };
}

/** Direct-definition convolution forward pass. */
function convForwardLoop(x: number[], w: number[], c: ConvCase): number[] {
  const { out: oh, before: padTop } = outAndPad(c.height, c.kernel, c.stride, c.pad);
  const { out: ow, before: padLeft } = outAndPad(c.width, c.kernel, c.stride, c.pad);
  const y = new Array<number>(c.batch * oh * ow * c.outChannels).fill(0);
  for (let b = 0; b < c.batch; b++) {
    for (let r = 0; r < oh; r++) {
      for (let s = 0; s < ow; s++) {
        for (let co = 0; co < c.outChannels; co++) {
          let acc = 0;
          for (let kr = 0; kr < c.kernel; kr++) {
            for (let kc = 0; kc < c.kernel; kc++) {
              const ir = r * c.stride + kr - padTop;
              const ic = s * c.stride + kc - padLeft;
              if (ir < 0 || ir >= c.height || ic < 0 || ic >= c.width) {
                continue;
              }
              for (let ci = 0; ci < c.inChannels; ci++) {
                acc += x[((b * c.height + ir) * c.width + ic) * c.inChannels + ci] *
                       w[((kr * c.kernel + kc) * c.inChannels + ci) * c.outChannels + co];
              }
            }
          }
          y[((b * oh + r) * ow + s) * c.outChannels + co] = acc;
        }
      }
    }
  }
  return y;
}

/** Direct-definition filter gradient. */
function filterGradLoop(x: number[], dy: number[], c: ConvCase): number[] {
  const { out: oh, before: padTop } = outAndPad(c.height, c.kernel, c.stride, c.pad);
  const { out: ow, before: padLeft } = outAndPad(c.width, c.kernel, c.stride, c.pad);
  const dw = new Array<number>(
    c.kernel * c.kernel * c.inChannels * c.outChannels).fill(0);
  for (let b = 0; b < c.batch; b++) {
    for (let r = 0; r < oh; r++) {
      for (let s = 0; s < ow; s++) {
        for (let kr = 0; kr < c.kernel; kr++) {
          for (let kc = 0; kc < c.kernel; kc++) {
            const ir = r * c.stride + kr - padTop;
            const ic = s * c.stride + kc - padLeft;
            if (ir < 0 || ir >= c.height || ic < 0 || ic >= c.width) {
              continue;
            }
            for (let ci = 0; ci < c.inChannels; ci++) {
              for (let co = 0; co < c.outChannels; co++) {
                dw[((kr * c.kernel + kc) * c.inChannels + ci) * c.outChannels + co] +=
                  x[((b * c.height + ir) * c.width + ic) * c.inChannels + ci] *
                  dy[((b * oh + r) * ow + s) * c.outChannels + co];
              }
            }
          }
        }
      }
    }
  }
  return dw;
}

/** Direct-definition input gradient. */
function inputGradLoop(w: number[], dy: number[], c: ConvCase): number[] {
  const { out: oh, before: padTop } = outAndPad(c.height, c.kernel, c.stride, c.pad);
  const { out: ow, before: padLeft } = outAndPad(c.width, c.kernel, c.stride, c.pad);
  const dx = new Array<number>(
    c.batch * c.height * c.width * c.inChannels).fill(0);
  for (let b = 0; b < c.batch; b++) {
    for (let r = 0; r < oh; r++) {
      for (let s = 0; s < ow; s++) {
        for (let kr = 0; kr < c.kernel; kr++) {
          for (let kc = 0; kc < c.kernel; kc++) {
            const ir = r * c.stride + kr - padTop;
            const ic = s * c.stride + kc - padLeft;
            if (ir < 0 || ir >= c.height || ic < 0 || ic >= c.width) {
              continue;
            }
            for (let ci = 0; ci < c.inChannels; ci++) {
              for (let co = 0; co < c.outChannels; co++) {
                dx[((b * c.height + ir) * c.width + ic) * c.inChannels + ci] +=
                  w[((kr * c.kernel + kc) * c.inChannels + ci) * c.outChannels + co] *
                  dy[((b * oh + r) * ow + s) * c.outChannels + co];
              }
            }
          }
        }
      }
    }
  }
  return dx;
}

function randomValues(n: number, rand: () => number): number[] {
  return Array.from({ length: n }, () => rand() * 2 - 1);
}

function maxAbsDiff(a: ArrayLike<number>, b: ArrayLike<number>): number {
  expect(a.length).toBe(b.length);
  let worst = 0;
  for (let i = 0; i < a.length; i++) {
    worst = Math.max(worst, Math.abs(a[i] - b[i]));
  }
  return worst;
}

let backend = "";

beforeAll(async () => {
  backend = await initBackend("wasm");
});

describe("wasm convolution gradients", () => {
  it("runs on the wasm backend", () => {
    expect(backend).toBe("wasm");
  });

  it("match direct-definition loops for filter and input gradients", () => {
    const rand = mulberry32(2024);
    for (const c of CASES) {
      const xVals = randomValues(
        c.batch * c.height * c.width * c.inChannels, rand);
      const wVals = randomValues(
        c.kernel * c.kernel * c.inChannels * c.outChannels, rand);
      const yLoop = convForwardLoop(xVals, wVals, c);
      const dyVals = randomValues(yLoop.length, rand);
      const dwLoop = filterGradLoop(xVals, dyVals, c);
      const dxLoop = inputGradLoop(wVals, dyVals, c);

      const x = tf.tensor4d(xVals, [c.batch, c.height, c.width, c.inChannels]);
      const w = tf.tensor4d(wVals,
                            [c.kernel, c.kernel, c.inChannels, c.outChannels]);
      const y = tf.conv2d(x, w, c.stride, c.pad);
      const dy = tf.tensor(dyVals, y.shape);
      const [dx, dw] = tf.grads(
        (xi: tf.Tensor, wi: tf.Tensor) =>
          tf.conv2d(xi as tf.Tensor4D, wi as tf.Tensor4D, c.stride, c.pad))(
        [x, w], dy as tf.Tensor);

      expect(maxAbsDiff(y.dataSync(), yLoop)).toBeLessThan(1e-4);
      expect(maxAbsDiff(dw.dataSync(), dwLoop)).toBeLessThan(1e-4);
      expect(maxAbsDiff(dx.dataSync(), dxLoop)).toBeLessThan(1e-4);
      tf.dispose([x, w, y, dy, dx, dw]);
    }
  });

  it("computes the filter gradient helper directly", () => {
    const rand = mulberry32(77);
    const c = CASES[1];
    const xVals = randomValues(
      c.batch * c.height * c.width * c.inChannels, rand);
    const yLen = convForwardLoop(
      xVals,
      new Array(c.kernel * c.kernel * c.inChannels * c.outChannels).fill(0),
      c).length;
    const dyVals = randomValues(yLen, rand);
    const dwLoop = filterGradLoop(xVals, dyVals, c);

    const { out: oh } = outAndPad(c.height, c.kernel, c.stride, c.pad);
    const { out: ow } = outAndPad(c.width, c.kernel, c.stride, c.pad);
    const x = tf.tensor4d(xVals, [c.batch, c.height, c.width, c.inChannels]);
    const dy = tf.tensor4d(dyVals, [c.batch, oh, ow, c.outChannels]);
    const dw = conv2dFilterGradient(
      x, dy, [c.kernel, c.kernel, c.inChannels, c.outChannels], c.stride,
      c.pad);
    expect(dw.shape).toEqual(
      [c.kernel, c.kernel, c.inChannels, c.outChannels]);
    expect(maxAbsDiff(dw.dataSync(), dwLoop)).toBeLessThan(1e-4);
    tf.dispose([x, dy, dw]);
  });

  it("does not leak tensors across gradient evaluations", () => {
    const c = CASES[0];
    const rand = mulberry32(5);
    const x = tf.tensor4d(
      randomValues(c.batch * c.height * c.width * c.inChannels, rand),
      [c.batch, c.height, c.width, c.inChannels]);
    const w = tf.tensor4d(
      randomValues(c.kernel * c.kernel * c.inChannels * c.outChannels, rand),
      [c.kernel, c.kernel, c.inChannels, c.outChannels]);
    const run = () => {
      const [dx, dw] = tf.grads(
        (xi: tf.Tensor, wi: tf.Tensor) =>
          tf.conv2d(xi as tf.Tensor4D, wi as tf.Tensor4D, c.stride, c.pad))(
        [x, w]);
      tf.dispose([dx, dw]);
    };
    run();
    const before = tf.memory().numTensors;
    for (let i = 0; i < 5; i++) {
      run();
    }
    expect(tf.memory().numTensors).toBe(before);
    tf.dispose([x, w]);
  });
});

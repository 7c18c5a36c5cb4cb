/** Backend selection and the one kernel the wasm backend is missing.
 *
 * Training prefers the wasm backend: its convolutions are orders of
 * magnitude faster than the plain JS backend. The stock wasm backend ships
 * no `Conv2DBackpropFilter` kernel (it targets inference), so this module
 * registers one built from operations the backend does provide: the filter
 * gradient of a convolution is itself a convolution once the batch and
 * channel axes of the input and upstream gradient swap roles, with the
 * forward stride becoming the dilation of the substitute convolution.
 */

import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";
import { setWasmPaths } from "@tensorflow/tfjs-backend-wasm";

export type BackendName = "wasm" | "cpu";

type PadMode = "same" | "valid" | number;

function padAmounts(inSize: number, outSize: number, kernel: number,
                    stride: number, pad: PadMode): [number, number] {
  if (pad === "same") {
    const total = Math.max(0, (outSize - 1) * stride + kernel - inSize);
    const before = Math.floor(total / 2);
    return [before, total - before];
  }
  if (typeof pad === "number") {
    return [pad, pad];
  }
  return [0, 0];
}

/**
 * Computes the gradient of `conv2d(x, filter)` with respect to the filter,
 * given the upstream gradient `dy`, using only forward convolutions.
 * Supports NHWC tensors with dilation 1, which is all the model uses.
 */
export function conv2dFilterGradient(
    x: tf.Tensor4D, dy: tf.Tensor4D,
    filterShape: [number, number, number, number],
    strides: number | [number, number], pad: PadMode): tf.Tensor4D {
  return tf.tidy(() => {
    const [batch, inHeight, inWidth] = x.shape;
    const [kernelHeight, kernelWidth] = filterShape;
    const [, outHeight, outWidth] = dy.shape;
    const [strideH, strideW] =
      typeof strides === "number" ? [strides, strides] : strides;
    const [padTop, padBottom] =
      padAmounts(inHeight, outHeight, kernelHeight, strideH, pad);
    const [padLeft, padRight] =
      padAmounts(inWidth, outWidth, kernelWidth, strideW, pad);

    let padded = x;
    if (padTop || padBottom || padLeft || padRight) {
      padded = tf.pad(x, [
        [0, 0], [padTop, padBottom], [padLeft, padRight], [0, 0]]);
    }
    // Rows and columns past the last window position never influenced the
    // forward output, so they are cropped before the substitute convolution.
    const heightUsed = (outHeight - 1) * strideH + kernelHeight;
    const widthUsed = (outWidth - 1) * strideW + kernelWidth;
    if (padded.shape[1] > heightUsed || padded.shape[2] > widthUsed) {
      padded = tf.slice(padded, [0, 0, 0, 0],
                        [batch, heightUsed, widthUsed, padded.shape[3]]);
    }
    const xAsBatch = tf.transpose(padded, [3, 1, 2, 0]);
    const dyAsFilter = tf.transpose(dy, [1, 2, 0, 3]);
    const grad = tf.conv2d(
      xAsBatch as tf.Tensor4D, dyAsFilter as tf.Tensor4D, 1, "valid", "NHWC",
      [strideH, strideW]);
    return tf.transpose(grad, [1, 2, 0, 3]) as tf.Tensor4D;
  });
}

let filterGradKernelRegistered = false;

/** Registers the missing `Conv2DBackpropFilter` kernel on the wasm backend. */
export function registerWasmFilterGradKernel(): void {
  if (filterGradKernelRegistered ||
      tf.getKernel("Conv2DBackpropFilter", "wasm") != null) {
    filterGradKernelRegistered = true;
    return;
  }
  tf.registerKernel({
    kernelName: "Conv2DBackpropFilter",
    backendName: "wasm",
    kernelFunc: ({ inputs, attrs, backend }) => {
      const { strides, pad, dataFormat, dimRoundingMode, filterShape } =
        attrs as unknown as {
          strides: number | [number, number];
          pad: PadMode;
          dataFormat: string;
          dimRoundingMode?: string;
          filterShape: [number, number, number, number];
        };
      if (dataFormat !== "NHWC") {
        throw new Error(
          `conv2d filter gradient: unsupported data format ${dataFormat}`);
      }
      if (dimRoundingMode != null) {
        throw new Error(
          "conv2d filter gradient: dimRoundingMode is not supported");
      }
      // Tensor handles share their data's backend refcount: wrapping a
      // TensorInfo does not take a reference, but disposing the wrapper
      // releases one. Every wrap is therefore paired with an incRef so the
      // caller's inputs survive, and the result is handed back as one
      // engine-owned reference.
      const wasm = backend as unknown as {
        incRef(dataId: object): void;
      };
      const engine = tf.engine();
      const xInfo = (inputs as { x: tf.TensorInfo }).x;
      const dyInfo = (inputs as { dy: tf.TensorInfo }).dy;
      wasm.incRef(xInfo.dataId);
      wasm.incRef(dyInfo.dataId);
      const x = engine.makeTensorFromTensorInfo(xInfo) as tf.Tensor4D;
      const dy = engine.makeTensorFromTensorInfo(dyInfo) as tf.Tensor4D;
      let result: tf.Tensor4D;
      try {
        result = conv2dFilterGradient(x, dy, filterShape, strides, pad);
      } finally {
        x.dispose();
        dy.dispose();
      }
      wasm.incRef(result.dataId);
      const out: tf.TensorInfo = {
        dataId: result.dataId,
        shape: result.shape,
        dtype: result.dtype,
      };
      result.dispose();
      return out;
    },
  });
  filterGradKernelRegistered = true;
}

let activeBackend: BackendName | null = null;

/**
 * Initializes the compute backend and returns its name. Prefers wasm and
 * falls back to the plain JS backend when wasm cannot start. Multi-threaded
 * wasm is disabled so runs stay deterministic for a fixed seed.
 */
export async function initBackend(
    preferred: BackendName = "wasm"): Promise<BackendName> {
  if (activeBackend === preferred) {
    return activeBackend;
  }
  if (preferred === "wasm") {
    try {
      const packageDir = path.dirname(
        require.resolve("@tensorflow/tfjs-backend-wasm"));
      setWasmPaths(packageDir + path.sep);
      tf.env().set("WASM_HAS_MULTITHREAD_SUPPORT", false);
      if (await tf.setBackend("wasm")) {
        await tf.ready();
        registerWasmFilterGradKernel();
        activeBackend = "wasm";
        return activeBackend;
      }
    } catch {
      // fall through to the JS backend
    }
  }
  await tf.setBackend("cpu");
  await tf.ready();
  activeBackend = "cpu";
  return activeBackend;
}

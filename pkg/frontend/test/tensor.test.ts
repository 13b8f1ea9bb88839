import { describe, expect, it } from "vitest";

import {
  Tensor, add, backward, clip, concatCols, concatRows, colRange, constant,
  exp, layerNormRow, logSoftmaxRow, matmul, meanAll, minimum, mul, param,
  pick, relu, resetTape, rowRange, scale, softmaxRow, stackRows, sub, sumAll,
  tanh, transpose,
} from "../src/tensor.js";
import { Rng } from "../src/rng.js";

/** Central finite-difference gradient of scalarFn wrt every entry of p. */
function numericGrad(p: Tensor, scalarFn: () => number, eps = 1e-6): Float64Array {
  const grad = new Float64Array(p.size);
  for (let i = 0; i < p.size; i++) {
    const orig = p.data[i];
    p.data[i] = orig + eps;
    const up = scalarFn();
    p.data[i] = orig - eps;
    const down = scalarFn();
    p.data[i] = orig;
    grad[i] = (up - down) / (2 * eps);
  }
  return grad;
}

function checkGrads(p: Tensor, build: () => Tensor, tol = 1e-7): void {
  resetTape();
  p.zeroGrad();
  const loss = build();
  backward(loss);
  const analytic = Float64Array.from(p.grad!);
  const numeric = numericGrad(p, () => {
    resetTape();
    return build().data[0];
  });
  for (let i = 0; i < p.size; i++) {
    const denom = Math.max(1.0, Math.abs(analytic[i]), Math.abs(numeric[i]));
    expect(Math.abs(analytic[i] - numeric[i]) / denom).toBeLessThan(tol);
  }
}

function randParam(rows: number, cols: number, rng: Rng, scale = 1.0): Tensor {
  const p = param(rows, cols);
  for (let i = 0; i < p.size; i++) p.data[i] = rng.gaussian() * scale;
  return p;
}

describe("autodiff gradients vs finite differences", () => {
  const rng = new Rng(7);
  const x = constant(3, 4, Array.from({ length: 12 }, () => rng.gaussian()));

  it("matmul + add + relu + mean", () => {
    const w = randParam(4, 5, rng, 0.7);
    const b = randParam(1, 5, rng, 0.3);
    checkGrads(w, () => meanAll(relu(add(matmul(x, w), b))));
    checkGrads(b, () => meanAll(relu(add(matmul(x, w), b))));
  });

  it("tanh + elementwise mul + sum", () => {
    const w = randParam(3, 4, rng);
    checkGrads(w, () => sumAll(mul(tanh(w), tanh(w))));
  });

  it("softmax row", () => {
    const w = randParam(2, 6, rng);
    checkGrads(w, () => {
      const s = softmaxRow(w);
      return sumAll(mul(s, constant(2, 6, Array.from({ length: 12 }, (_, i) => i * 0.1))));
    });
  });

  it("masked log-softmax", () => {
    const w = randParam(1, 5, rng);
    const mask = new Float64Array([0, -Infinity, 0, 0, -Infinity]);
    checkGrads(w, () => pick(logSoftmaxRow(w, mask), 0, 2));
  });

  it("layer norm with affine", () => {
    const w = randParam(3, 6, rng);
    const gain = randParam(1, 6, rng, 0.5);
    const bias = randParam(1, 6, rng, 0.2);
    for (const p of [w, gain, bias]) {
      checkGrads(p, () => meanAll(mul(layerNormRow(w, gain, bias),
                                      layerNormRow(w, gain, bias))));
    }
  });

  it("attention block: QK^T softmax V", () => {
    const wq = randParam(4, 4, rng, 0.5);
    const wk = randParam(4, 4, rng, 0.5);
    const wv = randParam(4, 4, rng, 0.5);
    const build = () => {
      const q = matmul(x, wq);
      const k = matmul(x, wk);
      const v = matmul(x, wv);
      const attn = softmaxRow(scale(matmul(q, transpose(k)), 0.5));
      return meanAll(matmul(attn, v));
    };
    for (const p of [wq, wk, wv]) checkGrads(p, build);
  });

  it("clip and minimum (away from kinks)", () => {
    const w = param(1, 4, [0.5, 1.5, -0.4, 0.9]);
    checkGrads(w, () => {
      const clipped = clip(w, -1.0, 1.0);
      const other = constant(1, 4, [0.2, 0.3, 0.1, 2.0]);
      return sumAll(minimum(mul(clipped, clipped), other));
    });
  });

  it("concat and slicing", () => {
    const a = randParam(3, 2, rng);
    const b = randParam(3, 3, rng);
    checkGrads(a, () => meanAll(colRange(concatCols(a, b), 1, 4)));
    const c = randParam(2, 2, rng);
    checkGrads(c, () => meanAll(rowRange(concatRows(a, c), 2, 5)));
  });

  it("exp/sub/stack pipeline (PPO ratio shape)", () => {
    const w = randParam(1, 3, rng, 0.3);
    checkGrads(w, () => {
      const rows = [];
      for (let j = 0; j < 3; j++) {
        rows.push(exp(sub(pick(w, 0, j), constant(1, 1, [0.1 * j]))));
      }
      return meanAll(stackRows(rows));
    });
  });
});

describe("tape mechanics", () => {
  it("gradients accumulate until zeroed", () => {
    const w = param(1, 1, [2.0]);
    resetTape();
    backward(scale(w, 3));
    expect(w.grad![0]).toBe(3);
    resetTape();
    backward(scale(w, 3));
    expect(w.grad![0]).toBe(6);
    w.zeroGrad();
    expect(w.grad![0]).toBe(0);
  });

  it("constants never grow gradients", () => {
    const c = constant(1, 2, [1, 2]);
    const w = param(1, 2, [3, 4]);
    resetTape();
    backward(sumAll(mul(c, w)));
    expect(c.grad).toBeNull();
    expect(Array.from(w.grad!)).toEqual([1, 2]);
  });
});

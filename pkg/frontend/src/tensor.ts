/**
 * Minimal float64 reverse-mode autodiff over 2-D tensors.
 *
 * Everything is a (rows x cols) matrix; vectors are 1 x n. Operations push
 * nodes onto a global tape; backward() walks the tape in reverse. Parameters
 * live outside the tape and accumulate gradients across calls until zeroed.
 * Float64 keeps finite-difference gradient checks meaningful at 1e-6 level.
 */

export class Tensor {
  data: Float64Array;
  grad: Float64Array | null = null;
  readonly rows: number;
  readonly cols: number;
  requiresGrad: boolean;
  backward_: (() => void) | null = null;

  constructor(rows: number, cols: number, data?: Float64Array, requiresGrad = false) {
    this.rows = rows;
    this.cols = cols;
    this.data = data ?? new Float64Array(rows * cols);
    this.requiresGrad = requiresGrad;
    if (requiresGrad) this.grad = new Float64Array(rows * cols);
  }

  get size(): number {
    return this.rows * this.cols;
  }

  at(r: number, c: number): number {
    return this.data[r * this.cols + c];
  }

  toArray(): number[] {
    return Array.from(this.data);
  }

  zeroGrad(): void {
    if (this.grad) this.grad.fill(0);
  }
}

/** Nodes created since the last reset, in creation order. */
const tape: Tensor[] = [];

export function resetTape(): void {
  tape.length = 0;
}

function track(t: Tensor, backward: () => void): Tensor {
  t.backward_ = backward;
  tape.push(t);
  return t;
}

function out(rows: number, cols: number, needsGrad: boolean): Tensor {
  return new Tensor(rows, cols, undefined, needsGrad);
}

export function backward(loss: Tensor): void {
  if (loss.size !== 1) throw new Error("backward() expects a scalar loss");
  if (!loss.grad) throw new Error("loss does not require grad");
  loss.grad[0] = 1.0;
  for (let i = tape.length - 1; i >= 0; i--) {
    const node = tape[i];
    if (node.backward_ && node.grad) node.backward_();
  }
}

export function constant(rows: number, cols: number, values: ArrayLike<number>): Tensor {
  const t = new Tensor(rows, cols);
  t.data.set(Array.from(values));
  return t;
}

export function param(rows: number, cols: number, values?: ArrayLike<number>): Tensor {
  const t = new Tensor(rows, cols, undefined, true);
  if (values) t.data.set(Array.from(values));
  return t;
}

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

export function matmul(a: Tensor, b: Tensor): Tensor {
  if (a.cols !== b.rows) throw new Error(`matmul shape (${a.rows}x${a.cols})x(${b.rows}x${b.cols})`);
  const needs = a.requiresGrad || b.requiresGrad;
  const r = out(a.rows, b.cols, needs);
  for (let i = 0; i < a.rows; i++) {
    for (let kk = 0; kk < a.cols; kk++) {
      const av = a.data[i * a.cols + kk];
      if (av === 0) continue;
      for (let j = 0; j < b.cols; j++) {
        r.data[i * b.cols + j] += av * b.data[kk * b.cols + j];
      }
    }
  }
  if (!needs) return r;
  return track(r, () => {
    const g = r.grad!;
    if (a.grad) {
      for (let i = 0; i < a.rows; i++) {
        for (let kk = 0; kk < a.cols; kk++) {
          let acc = 0;
          for (let j = 0; j < b.cols; j++) acc += g[i * b.cols + j] * b.data[kk * b.cols + j];
          a.grad[i * a.cols + kk] += acc;
        }
      }
    }
    if (b.grad) {
      for (let kk = 0; kk < b.rows; kk++) {
        for (let j = 0; j < b.cols; j++) {
          let acc = 0;
          for (let i = 0; i < a.rows; i++) acc += a.data[i * a.cols + kk] * g[i * b.cols + j];
          b.grad[kk * b.cols + j] += acc;
        }
      }
    }
  });
}

/** Elementwise add; b may be a (1 x cols) row broadcast over a's rows. */
export function add(a: Tensor, b: Tensor): Tensor {
  const broadcast = b.rows === 1 && a.rows !== 1;
  if (a.cols !== b.cols || (!broadcast && a.rows !== b.rows)) {
    throw new Error(`add shape (${a.rows}x${a.cols})+(${b.rows}x${b.cols})`);
  }
  const needs = a.requiresGrad || b.requiresGrad;
  const r = out(a.rows, a.cols, needs);
  for (let i = 0; i < a.rows; i++) {
    for (let j = 0; j < a.cols; j++) {
      r.data[i * a.cols + j] = a.data[i * a.cols + j] + b.data[(broadcast ? 0 : i) * b.cols + j];
    }
  }
  if (!needs) return r;
  return track(r, () => {
    const g = r.grad!;
    if (a.grad) for (let idx = 0; idx < a.size; idx++) a.grad[idx] += g[idx];
    if (b.grad) {
      for (let i = 0; i < a.rows; i++) {
        for (let j = 0; j < a.cols; j++) b.grad[(broadcast ? 0 : i) * b.cols + j] += g[i * a.cols + j];
      }
    }
  });
}

export function sub(a: Tensor, b: Tensor): Tensor {
  return add(a, scale(b, -1));
}

export function scale(a: Tensor, s: number): Tensor {
  const r = out(a.rows, a.cols, a.requiresGrad);
  for (let idx = 0; idx < a.size; idx++) r.data[idx] = a.data[idx] * s;
  if (!a.requiresGrad) return r;
  return track(r, () => {
    for (let idx = 0; idx < a.size; idx++) a.grad![idx] += r.grad![idx] * s;
  });
}

export function mul(a: Tensor, b: Tensor): Tensor {
  if (a.rows !== b.rows || a.cols !== b.cols) throw new Error("mul shape mismatch");
  const needs = a.requiresGrad || b.requiresGrad;
  const r = out(a.rows, a.cols, needs);
  for (let idx = 0; idx < a.size; idx++) r.data[idx] = a.data[idx] * b.data[idx];
  if (!needs) return r;
  return track(r, () => {
    const g = r.grad!;
    if (a.grad) for (let idx = 0; idx < a.size; idx++) a.grad[idx] += g[idx] * b.data[idx];
    if (b.grad) for (let idx = 0; idx < a.size; idx++) b.grad[idx] += g[idx] * a.data[idx];
  });
}

export function relu(a: Tensor): Tensor {
  const r = out(a.rows, a.cols, a.requiresGrad);
  for (let idx = 0; idx < a.size; idx++) r.data[idx] = a.data[idx] > 0 ? a.data[idx] : 0;
  if (!a.requiresGrad) return r;
  return track(r, () => {
    for (let idx = 0; idx < a.size; idx++) if (a.data[idx] > 0) a.grad![idx] += r.grad![idx];
  });
}

export function tanh(a: Tensor): Tensor {
  const r = out(a.rows, a.cols, a.requiresGrad);
  for (let idx = 0; idx < a.size; idx++) r.data[idx] = Math.tanh(a.data[idx]);
  if (!a.requiresGrad) return r;
  return track(r, () => {
    for (let idx = 0; idx < a.size; idx++) a.grad![idx] += r.grad![idx] * (1 - r.data[idx] * r.data[idx]);
  });
}

export function exp(a: Tensor): Tensor {
  const r = out(a.rows, a.cols, a.requiresGrad);
  for (let idx = 0; idx < a.size; idx++) r.data[idx] = Math.exp(a.data[idx]);
  if (!a.requiresGrad) return r;
  return track(r, () => {
    for (let idx = 0; idx < a.size; idx++) a.grad![idx] += r.grad![idx] * r.data[idx];
  });
}

/** Elementwise clip with pass-through gradient strictly inside (lo, hi). */
export function clip(a: Tensor, lo: number, hi: number): Tensor {
  const r = out(a.rows, a.cols, a.requiresGrad);
  for (let idx = 0; idx < a.size; idx++) {
    r.data[idx] = Math.min(hi, Math.max(lo, a.data[idx]));
  }
  if (!a.requiresGrad) return r;
  return track(r, () => {
    for (let idx = 0; idx < a.size; idx++) {
      if (a.data[idx] > lo && a.data[idx] < hi) a.grad![idx] += r.grad![idx];
    }
  });
}

/** Elementwise minimum; gradient follows the selected branch (ties go to a). */
export function minimum(a: Tensor, b: Tensor): Tensor {
  if (a.rows !== b.rows || a.cols !== b.cols) throw new Error("minimum shape mismatch");
  const needs = a.requiresGrad || b.requiresGrad;
  const r = out(a.rows, a.cols, needs);
  const takeA = new Uint8Array(a.size);
  for (let idx = 0; idx < a.size; idx++) {
    takeA[idx] = a.data[idx] <= b.data[idx] ? 1 : 0;
    r.data[idx] = takeA[idx] ? a.data[idx] : b.data[idx];
  }
  if (!needs) return r;
  return track(r, () => {
    const g = r.grad!;
    for (let idx = 0; idx < a.size; idx++) {
      if (takeA[idx]) {
        if (a.grad) a.grad[idx] += g[idx];
      } else if (b.grad) {
        b.grad[idx] += g[idx];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

export function concatCols(a: Tensor, b: Tensor): Tensor {
  if (a.rows !== b.rows) throw new Error("concatCols row mismatch");
  const needs = a.requiresGrad || b.requiresGrad;
  const cols = a.cols + b.cols;
  const r = out(a.rows, cols, needs);
  for (let i = 0; i < a.rows; i++) {
    r.data.set(a.data.subarray(i * a.cols, (i + 1) * a.cols), i * cols);
    r.data.set(b.data.subarray(i * b.cols, (i + 1) * b.cols), i * cols + a.cols);
  }
  if (!needs) return r;
  return track(r, () => {
    const g = r.grad!;
    for (let i = 0; i < a.rows; i++) {
      for (let j = 0; j < a.cols; j++) if (a.grad) a.grad[i * a.cols + j] += g[i * cols + j];
      for (let j = 0; j < b.cols; j++) if (b.grad) b.grad[i * b.cols + j] += g[i * cols + a.cols + j];
    }
  });
}

export function concatRows(a: Tensor, b: Tensor): Tensor {
  if (a.cols !== b.cols) throw new Error("concatRows col mismatch");
  const needs = a.requiresGrad || b.requiresGrad;
  const r = out(a.rows + b.rows, a.cols, needs);
  r.data.set(a.data, 0);
  r.data.set(b.data, a.size);
  if (!needs) return r;
  return track(r, () => {
    const g = r.grad!;
    if (a.grad) for (let idx = 0; idx < a.size; idx++) a.grad[idx] += g[idx];
    if (b.grad) for (let idx = 0; idx < b.size; idx++) b.grad[idx] += g[a.size + idx];
  });
}

export function rowRange(a: Tensor, start: number, end: number): Tensor {
  const rows = end - start;
  const r = out(rows, a.cols, a.requiresGrad);
  r.data.set(a.data.subarray(start * a.cols, end * a.cols));
  if (!a.requiresGrad) return r;
  return track(r, () => {
    for (let idx = 0; idx < r.size; idx++) a.grad![start * a.cols + idx] += r.grad![idx];
  });
}

export function colRange(a: Tensor, start: number, end: number): Tensor {
  const cols = end - start;
  const r = out(a.rows, cols, a.requiresGrad);
  for (let i = 0; i < a.rows; i++) {
    r.data.set(a.data.subarray(i * a.cols + start, i * a.cols + end), i * cols);
  }
  if (!a.requiresGrad) return r;
  return track(r, () => {
    for (let i = 0; i < a.rows; i++) {
      for (let j = 0; j < cols; j++) a.grad![i * a.cols + start + j] += r.grad![i * cols + j];
    }
  });
}

export function transpose(a: Tensor): Tensor {
  const r = out(a.cols, a.rows, a.requiresGrad);
  for (let i = 0; i < a.rows; i++) {
    for (let j = 0; j < a.cols; j++) r.data[j * a.rows + i] = a.data[i * a.cols + j];
  }
  if (!a.requiresGrad) return r;
  return track(r, () => {
    for (let i = 0; i < a.rows; i++) {
      for (let j = 0; j < a.cols; j++) a.grad![i * a.cols + j] += r.grad![j * a.rows + i];
    }
  });
}

/** Pick one entry as a 1x1 tensor. */
export function pick(a: Tensor, row: number, col: number): Tensor {
  const r = out(1, 1, a.requiresGrad);
  r.data[0] = a.data[row * a.cols + col];
  if (!a.requiresGrad) return r;
  return track(r, () => {
    a.grad![row * a.cols + col] += r.grad![0];
  });
}

export function meanAll(a: Tensor): Tensor {
  const r = out(1, 1, a.requiresGrad);
  let acc = 0;
  for (let idx = 0; idx < a.size; idx++) acc += a.data[idx];
  r.data[0] = acc / a.size;
  if (!a.requiresGrad) return r;
  return track(r, () => {
    const g = r.grad![0] / a.size;
    for (let idx = 0; idx < a.size; idx++) a.grad![idx] += g;
  });
}

export function sumAll(a: Tensor): Tensor {
  const r = out(1, 1, a.requiresGrad);
  let acc = 0;
  for (let idx = 0; idx < a.size; idx++) acc += a.data[idx];
  r.data[0] = acc;
  if (!a.requiresGrad) return r;
  return track(r, () => {
    for (let idx = 0; idx < a.size; idx++) a.grad![idx] += r.grad![0];
  });
}

export function stackRows(rows: Tensor[]): Tensor {
  const cols = rows[0].cols;
  const needs = rows.some((t) => t.requiresGrad);
  const r = out(rows.length, cols, needs);
  rows.forEach((t, i) => {
    if (t.rows !== 1 || t.cols !== cols) throw new Error("stackRows expects 1xC rows");
    r.data.set(t.data, i * cols);
  });
  if (!needs) return r;
  return track(r, () => {
    rows.forEach((t, i) => {
      if (t.grad) for (let j = 0; j < cols; j++) t.grad[j] += r.grad![i * cols + j];
    });
  });
}

// ---------------------------------------------------------------------------
// normalization and softmax
// ---------------------------------------------------------------------------

/** Row-wise softmax with optional additive mask (-Infinity disables entries). */
export function softmaxRow(a: Tensor, mask?: Float64Array): Tensor {
  const r = out(a.rows, a.cols, a.requiresGrad);
  for (let i = 0; i < a.rows; i++) {
    let max = -Infinity;
    for (let j = 0; j < a.cols; j++) {
      const v = a.data[i * a.cols + j] + (mask ? mask[j] : 0);
      if (v > max) max = v;
    }
    let z = 0;
    for (let j = 0; j < a.cols; j++) {
      const v = a.data[i * a.cols + j] + (mask ? mask[j] : 0);
      const e = v === -Infinity ? 0 : Math.exp(v - max);
      r.data[i * a.cols + j] = e;
      z += e;
    }
    for (let j = 0; j < a.cols; j++) r.data[i * a.cols + j] /= z;
  }
  if (!a.requiresGrad) return r;
  return track(r, () => {
    for (let i = 0; i < a.rows; i++) {
      let dot = 0;
      for (let j = 0; j < a.cols; j++) dot += r.grad![i * a.cols + j] * r.data[i * a.cols + j];
      for (let j = 0; j < a.cols; j++) {
        const idx = i * a.cols + j;
        a.grad![idx] += r.data[idx] * (r.grad![idx] - dot);
      }
    }
  });
}

/** Row-wise log-softmax with optional additive mask. */
export function logSoftmaxRow(a: Tensor, mask?: Float64Array): Tensor {
  const r = out(a.rows, a.cols, a.requiresGrad);
  const probs = new Float64Array(a.size);
  for (let i = 0; i < a.rows; i++) {
    let max = -Infinity;
    for (let j = 0; j < a.cols; j++) {
      const v = a.data[i * a.cols + j] + (mask ? mask[j] : 0);
      if (v > max) max = v;
    }
    let z = 0;
    for (let j = 0; j < a.cols; j++) {
      const v = a.data[i * a.cols + j] + (mask ? mask[j] : 0);
      z += v === -Infinity ? 0 : Math.exp(v - max);
    }
    const logz = Math.log(z) + max;
    for (let j = 0; j < a.cols; j++) {
      const idx = i * a.cols + j;
      const v = a.data[idx] + (mask ? mask[j] : 0);
      r.data[idx] = v - logz;
      probs[idx] = v === -Infinity ? 0 : Math.exp(v - logz);
    }
  }
  if (!a.requiresGrad) return r;
  return track(r, () => {
    for (let i = 0; i < a.rows; i++) {
      let gsum = 0;
      for (let j = 0; j < a.cols; j++) gsum += r.grad![i * a.cols + j];
      for (let j = 0; j < a.cols; j++) {
        const idx = i * a.cols + j;
        if (probs[idx] === 0 && r.data[idx] === -Infinity) continue;
        a.grad![idx] += r.grad![idx] - probs[idx] * gsum;
      }
    }
  });
}

/** Row-wise layer normalization with learnable gain/bias (each 1 x cols). */
export function layerNormRow(a: Tensor, gain: Tensor, bias: Tensor, eps = 1e-5): Tensor {
  const needs = a.requiresGrad || gain.requiresGrad || bias.requiresGrad;
  const r = out(a.rows, a.cols, needs);
  const n = a.cols;
  const normed = new Float64Array(a.size);
  const invstd = new Float64Array(a.rows);
  for (let i = 0; i < a.rows; i++) {
    let mean = 0;
    for (let j = 0; j < n; j++) mean += a.data[i * n + j];
    mean /= n;
    let varsum = 0;
    for (let j = 0; j < n; j++) {
      const d = a.data[i * n + j] - mean;
      varsum += d * d;
    }
    const inv = 1.0 / Math.sqrt(varsum / n + eps);
    invstd[i] = inv;
    for (let j = 0; j < n; j++) {
      const y = (a.data[i * n + j] - mean) * inv;
      normed[i * n + j] = y;
      r.data[i * n + j] = y * gain.data[j] + bias.data[j];
    }
  }
  if (!needs) return r;
  return track(r, () => {
    const g = r.grad!;
    for (let i = 0; i < a.rows; i++) {
      if (gain.grad || bias.grad) {
        for (let j = 0; j < n; j++) {
          if (gain.grad) gain.grad[j] += g[i * n + j] * normed[i * n + j];
          if (bias.grad) bias.grad[j] += g[i * n + j];
        }
      }
      if (a.grad) {
        let sum1 = 0;
        let sum2 = 0;
        for (let j = 0; j < n; j++) {
          const gy = g[i * n + j] * gain.data[j];
          sum1 += gy;
          sum2 += gy * normed[i * n + j];
        }
        for (let j = 0; j < n; j++) {
          const gy = g[i * n + j] * gain.data[j];
          a.grad[i * n + j] += invstd[i] * (gy - sum1 / n - normed[i * n + j] * sum2 / n);
        }
      }
    }
  });
}

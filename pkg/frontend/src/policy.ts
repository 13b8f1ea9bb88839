/**
 * Transformer policy and critic for the sequencing MDP.
 *
 * Region features are projected and tagged with a learnable identity
 * embedding (self-attention alone is permutation invariant); a classification
 * token initialized from the global context is prepended and aggregates the
 * regions through attention. Two heads decode the encoded tokens: a quantity
 * head mapping the classification token to a portfolio-size distribution, and
 * a selection head fusing encoder outputs with re-encoded raw features to
 * score regions. The critic mirrors the encoder (separate parameters) and
 * concatenates the classification token with the raw global features so the
 * dominant global trends skip the attention stack.
 */

import { Rng } from "./rng.js";
import {
  Tensor, add, backward, clip, concatCols, concatRows, colRange, constant,
  exp, layerNormRow, logSoftmaxRow, matmul, meanAll, minimum, mul, param,
  pick, relu, resetTape, rowRange, scale, softmaxRow, stackRows, sub, sumAll,
  transpose,
} from "./tensor.js";

export interface PolicyConfig {
  nRegions: number;
  k: number;                 // portfolio-size head support is 0..k
  numLayers: number;         // transformer depth L
  width: number;             // model width d
  heads: number;             // attention heads
  clipEpsilon: number;       // PPO clip range, in (0, 1)
  valueCoef: number;         // c1
  entropyCoef: number;       // c2
  gaeLambda: number;
  gamma: number;
  learningRate: number;
  episodesPerBatch: number;
  epochsPerBatch: number;
  minibatchSize: number;
}

export const DEFAULT_CONFIG: Omit<PolicyConfig, "nRegions" | "k"> = {
  numLayers: 2,
  width: 64,
  heads: 4,
  clipEpsilon: 0.2,
  valueCoef: 0.5,
  entropyCoef: 0.01,
  gaeLambda: 0.95,
  gamma: 1.0,
  learningRate: 3e-4,
  episodesPerBatch: 8,
  epochsPerBatch: 4,
  minibatchSize: 32,
};

export function validateConfig(cfg: PolicyConfig): void {
  if (!(cfg.clipEpsilon > 0 && cfg.clipEpsilon < 1)) {
    throw new Error(`clipEpsilon must be in (0,1), got ${cfg.clipEpsilon}`);
  }
  if (cfg.valueCoef < 0 || cfg.entropyCoef < 0) {
    throw new Error("valueCoef and entropyCoef must be >= 0");
  }
  if (cfg.numLayers < 1) throw new Error("numLayers must be >= 1");
  if (cfg.width % cfg.heads !== 0) throw new Error("width must divide by heads");
  if (!(cfg.gamma > 0 && cfg.gamma <= 1)) throw new Error("gamma must be in (0,1]");
}

export const NODE_FEATURES = 4;
export const GLOBAL_FEATURES = 3;

export interface MaskInfo {
  selectable: number[];  // 0/1 per region
  minSize: number;
  maxSize: number;
}

export interface SampledAction {
  action: number[];          // 0/1 vector
  orderedPicks: number[];    // regions in draw order (log-prob decomposition)
  size: number;
  logProb: number;
}

interface EncoderParams {
  nodeW1: Tensor; nodeB1: Tensor; nodeW2: Tensor; nodeB2: Tensor;
  idEmbed: Tensor;
  globW1: Tensor; globB1: Tensor; globW2: Tensor; globB2: Tensor;
  clsToken: Tensor;
  layers: {
    wq: Tensor; wk: Tensor; wv: Tensor; wo: Tensor;
    ln1g: Tensor; ln1b: Tensor;
    ffnW1: Tensor; ffnB1: Tensor; ffnW2: Tensor; ffnB2: Tensor;
    ln2g: Tensor; ln2b: Tensor;
  }[];
}

export class TppoModel {
  readonly cfg: PolicyConfig;
  readonly params = new Map<string, Tensor>();

  constructor(cfg: PolicyConfig, initSeed: number) {
    validateConfig(cfg);
    this.cfg = cfg;
    const rng = new Rng(initSeed);
    const d = cfg.width;
    this.buildEncoder("pi", rng);
    this.buildEncoder("v", rng);
    // quantity head: cls -> size logits over 0..k
    this.dense("qh1", d, d, rng);
    this.dense("qh2", d, cfg.k + 1, rng);
    // selection head: fuse [encoded node; raw-projected node]
    this.dense("raw", NODE_FEATURES, d, rng);
    this.dense("fuse", 2 * d, d, rng);
    this.norm("fuse_ln", d);
    this.vec("sq", d, rng);
    // critic head on [cls; g]
    this.dense("vh1", d + GLOBAL_FEATURES, d, rng);
    this.dense("vh2", d, 1, rng);
  }

  private init(rows: number, cols: number, rng: Rng): Tensor {
    const t = param(rows, cols);
    const std = Math.sqrt(2.0 / (rows + cols));
    for (let i = 0; i < t.size; i++) t.data[i] = rng.gaussian() * std;
    return t;
  }

  private dense(name: string, inDim: number, outDim: number, rng: Rng): void {
    this.params.set(`${name}.w`, this.init(inDim, outDim, rng));
    this.params.set(`${name}.b`, param(1, outDim));
  }

  private norm(name: string, dim: number): void {
    const gain = param(1, dim);
    gain.data.fill(1.0);
    this.params.set(`${name}.g`, gain);
    this.params.set(`${name}.b`, param(1, dim));
  }

  private vec(name: string, dim: number, rng: Rng): void {
    this.params.set(name, this.init(dim, 1, rng));
  }

  private buildEncoder(prefix: string, rng: Rng): void {
    const { width: d, nRegions, numLayers } = this.cfg;
    this.dense(`${prefix}.node1`, NODE_FEATURES, d, rng);
    this.dense(`${prefix}.node2`, d, d, rng);
    this.params.set(`${prefix}.id`, this.init(nRegions, d, rng));
    this.dense(`${prefix}.glob1`, GLOBAL_FEATURES, d, rng);
    this.dense(`${prefix}.glob2`, d, d, rng);
    this.params.set(`${prefix}.cls`, this.init(1, d, rng));
    for (let l = 0; l < numLayers; l++) {
      for (const name of ["wq", "wk", "wv", "wo"]) {
        this.params.set(`${prefix}.L${l}.${name}`, this.init(d, d, rng));
      }
      this.norm(`${prefix}.L${l}.ln1`, d);
      this.dense(`${prefix}.L${l}.ffn1`, d, 2 * d, rng);
      this.dense(`${prefix}.L${l}.ffn2`, 2 * d, d, rng);
      this.norm(`${prefix}.L${l}.ln2`, d);
    }
  }

  p(name: string): Tensor {
    const t = this.params.get(name);
    if (!t) throw new Error(`no parameter ${name}`);
    return t;
  }

  private denseFwd(name: string, x: Tensor): Tensor {
    return add(matmul(x, this.p(`${name}.w`)), this.p(`${name}.b`));
  }

  /** Encode (x, g) into N+1 tokens; classification token is row 0. */
  encode(prefix: string, x: Tensor, g: Tensor): Tensor {
    const cfg = this.cfg;
    const nodeHidden = relu(this.denseFwd(`${prefix}.node1`, x));
    let nodes = add(this.denseFwd(`${prefix}.node2`, nodeHidden), this.p(`${prefix}.id`));
    const globHidden = relu(this.denseFwd(`${prefix}.glob1`, g));
    let cls = add(this.denseFwd(`${prefix}.glob2`, globHidden), this.p(`${prefix}.cls`));
    let tokens = concatRows(cls, nodes);
    const dh = cfg.width / cfg.heads;
    for (let l = 0; l < cfg.numLayers; l++) {
      const q = matmul(tokens, this.p(`${prefix}.L${l}.wq`));
      const k = matmul(tokens, this.p(`${prefix}.L${l}.wk`));
      const v = matmul(tokens, this.p(`${prefix}.L${l}.wv`));
      let headsOut: Tensor | null = null;
      for (let h = 0; h < cfg.heads; h++) {
        const qh = colRange(q, h * dh, (h + 1) * dh);
        const kh = colRange(k, h * dh, (h + 1) * dh);
        const vh = colRange(v, h * dh, (h + 1) * dh);
        const scores = scale(matmul(qh, transpose(kh)), 1.0 / Math.sqrt(dh));
        const attn = softmaxRow(scores);
        const oh = matmul(attn, vh);
        headsOut = headsOut ? concatCols(headsOut, oh) : oh;
      }
      const attnOut = matmul(headsOut!, this.p(`${prefix}.L${l}.wo`));
      tokens = layerNormRow(add(tokens, attnOut),
                            this.p(`${prefix}.L${l}.ln1.g`), this.p(`${prefix}.L${l}.ln1.b`));
      const ffn = this.denseFwd(`${prefix}.L${l}.ffn2`,
                                relu(this.denseFwd(`${prefix}.L${l}.ffn1`, tokens)));
      tokens = layerNormRow(add(tokens, ffn),
                            this.p(`${prefix}.L${l}.ln2.g`), this.p(`${prefix}.L${l}.ln2.b`));
    }
    return tokens;
  }

  /** Size logits (1 x k+1) and region logits (1 x N) for one state. */
  policyHeads(x: Tensor, g: Tensor): { sizeLogits: Tensor; regionLogits: Tensor } {
    const tokens = this.encode("pi", x, g);
    const cls = rowRange(tokens, 0, 1);
    const nodes = rowRange(tokens, 1, 1 + this.cfg.nRegions);
    const sizeLogits = this.denseFwd("qh2", relu(this.denseFwd("qh1", cls)));
    const rawProj = this.denseFwd("raw", x);
    const fused = layerNormRow(
      relu(this.denseFwd("fuse", concatCols(nodes, rawProj))),
      this.p("fuse_ln.g"), this.p("fuse_ln.b"));
    const regionLogits = transpose(matmul(fused, this.p("sq")));
    return { sizeLogits, regionLogits };
  }

  /** Critic value for one state: scalar tensor. */
  value(x: Tensor, g: Tensor): Tensor {
    const tokens = this.encode("v", x, g);
    const cls = rowRange(tokens, 0, 1);
    const joined = concatCols(cls, g);
    return this.denseFwd("vh2", relu(this.denseFwd("vh1", joined)));
  }

  parameterList(): [string, Tensor][] {
    return Array.from(this.params.entries());
  }

  zeroGrads(): void {
    for (const [, t] of this.params) t.zeroGrad();
  }

  serialize(): Record<string, { rows: number; cols: number; data: number[] }> {
    const out: Record<string, { rows: number; cols: number; data: number[] }> = {};
    for (const [name, t] of this.params) {
      out[name] = { rows: t.rows, cols: t.cols, data: t.toArray() };
    }
    return out;
  }

  load(snapshot: Record<string, { rows: number; cols: number; data: number[] }>): void {
    for (const [name, t] of this.params) {
      const saved = snapshot[name];
      if (!saved || saved.rows !== t.rows || saved.cols !== t.cols) {
        throw new Error(`checkpoint mismatch for ${name}`);
      }
      t.data.set(saved.data);
    }
  }
}

// ---------------------------------------------------------------------------
// distributions over actions
// ---------------------------------------------------------------------------

function sizeMask(k: number, minSize: number, maxSize: number): Float64Array {
  const mask = new Float64Array(k + 1).fill(-Infinity);
  for (let s = Math.max(minSize, 1); s <= maxSize; s++) mask[s] = 0;
  if (minSize === 0 && maxSize >= 0) mask[0] = 0; // skip legal only without pressure
  return mask;
}

function regionMask(selectable: number[], exclude: Set<number>): Float64Array {
  const mask = new Float64Array(selectable.length);
  for (let i = 0; i < selectable.length; i++) {
    mask[i] = selectable[i] === 1 && !exclude.has(i) ? 0 : -Infinity;
  }
  return mask;
}

/**
 * Wire features to network inputs. The raw demand entries (node feature 3 and
 * global feature 2) carry scenario-dependent magnitudes; divide node demand by
 * the global mean (a dimensionless relative-size signal) and log-compress the
 * mean itself so all inputs are O(1).
 */
export function featureTensors(state: { x: number[]; x_shape: number[]; g: number[] }): {
  x: Tensor; g: Tensor;
} {
  const [n, f] = state.x_shape;
  const meanDemand = Math.max(state.g[2], 1e-12);
  const xData = state.x.slice();
  for (let i = 0; i < n; i++) xData[i * f + 3] = state.x[i * f + 3] / meanDemand;
  const gData = state.g.slice();
  gData[2] = Math.log1p(state.g[2]) / 8.0;
  return {
    x: constant(n, f, xData),
    g: constant(1, gData.length, gData),
  };
}

/**
 * Sample an action: size from the quantity head clipped to [minSize, maxSize]
 * (renormalized), then that many regions drawn sequentially without
 * replacement from the masked selection distribution.
 */
export function sampleAction(model: TppoModel, x: Tensor, g: Tensor,
                             mask: MaskInfo, rng: Rng): SampledAction {
  const { sizeLogits, regionLogits } = model.policyHeads(x, g);
  const smask = sizeMask(model.cfg.k, mask.minSize, mask.maxSize);
  const sizeProbs = softmaxRow(sizeLogits, smask);
  const size = rng.categorical(sizeProbs.data);
  let logProb = Math.log(sizeProbs.data[size]);

  const picks: number[] = [];
  const exclude = new Set<number>();
  for (let draw = 0; draw < size; draw++) {
    const rmask = regionMask(mask.selectable, exclude);
    const probs = softmaxRow(regionLogits, rmask);
    const region = rng.categorical(probs.data);
    logProb += Math.log(probs.data[region]);
    picks.push(region);
    exclude.add(region);
  }
  const action = new Array(mask.selectable.length).fill(0);
  for (const r of picks) action[r] = 1;
  return { action, orderedPicks: picks, size, logProb };
}

/** Greedy (argmax) action for evaluation rollouts. */
export function greedyAction(model: TppoModel, x: Tensor, g: Tensor,
                             mask: MaskInfo): SampledAction {
  const { sizeLogits, regionLogits } = model.policyHeads(x, g);
  const smask = sizeMask(model.cfg.k, mask.minSize, mask.maxSize);
  const sizeProbs = softmaxRow(sizeLogits, smask);
  let size = 0;
  for (let s = 1; s < sizeProbs.data.length; s++) {
    if (sizeProbs.data[s] > sizeProbs.data[size]) size = s;
  }
  let logProb = Math.log(sizeProbs.data[size]);
  const picks: number[] = [];
  const exclude = new Set<number>();
  for (let draw = 0; draw < size; draw++) {
    const rmask = regionMask(mask.selectable, exclude);
    const probs = softmaxRow(regionLogits, rmask);
    let region = -1;
    for (let i = 0; i < probs.data.length; i++) {
      if (rmask[i] === 0 && (region < 0 || probs.data[i] > probs.data[region])) region = i;
    }
    logProb += Math.log(probs.data[region]);
    picks.push(region);
    exclude.add(region);
  }
  const action = new Array(mask.selectable.length).fill(0);
  for (const r of picks) action[r] = 1;
  return { action, orderedPicks: picks, size, logProb };
}

/**
 * Differentiable log-probability (and entropy bonus term) of a recorded
 * action under the current parameters, using the same size-then-sequential
 * decomposition that produced it.
 */
export function actionLogProb(model: TppoModel, x: Tensor, g: Tensor,
                              mask: MaskInfo, orderedPicks: number[],
                              size: number): { logProb: Tensor; entropy: Tensor } {
  const { sizeLogits, regionLogits } = model.policyHeads(x, g);
  const smask = sizeMask(model.cfg.k, mask.minSize, mask.maxSize);
  const sizeLogProbs = logSoftmaxRow(sizeLogits, smask);
  let logProb = pick(sizeLogProbs, 0, size);
  let entropy = distEntropy(sizeLogProbs, smask);

  const exclude = new Set<number>();
  for (const region of orderedPicks) {
    const rmask = regionMask(mask.selectable, exclude);
    const logProbs = logSoftmaxRow(regionLogits, rmask);
    logProb = add(logProb, pick(logProbs, 0, region));
    entropy = add(entropy, distEntropy(logProbs, rmask));
    exclude.add(region);
  }
  return { logProb, entropy };
}

/** Entropy -sum p log p of a masked log-softmax row (masked entries skipped). */
function distEntropy(logProbs: Tensor, mask: Float64Array): Tensor {
  let acc: Tensor | null = null;
  for (let j = 0; j < logProbs.cols; j++) {
    if (mask[j] === -Infinity) continue;
    const lp = pick(logProbs, 0, j);
    const term = mul(exp(lp), lp);
    acc = acc ? add(acc, term) : term;
  }
  return scale(acc!, -1);
}

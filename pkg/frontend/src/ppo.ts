/**
 * PPO with clipped surrogate, value regression and entropy bonus over
 * generalized-advantage estimates, collecting episodes from a bridge-served
 * environment. Single-session data collection keeps runs bit-reproducible.
 *
 * Rewards are divided by a scale calibrated on the first batch (mean absolute
 * episode return) so the critic regression is well-conditioned regardless of
 * the scenario's demand magnitude; reported returns stay in raw units.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { BridgeClient, EnvView, InitInfo } from "./client.js";
import {
  MaskInfo, PolicyConfig, SampledAction, TppoModel, actionLogProb,
  featureTensors, greedyAction, sampleAction,
} from "./policy.js";
import { Rng } from "./rng.js";
import {
  Tensor, add, backward, clip, constant, exp, meanAll, minimum, mul,
  resetTape, scale, stackRows, sub,
} from "./tensor.js";

export interface StepRecord {
  x: number[]; xShape: number[]; g: number[];
  mask: MaskInfo;
  orderedPicks: number[];
  size: number;
  logProb: number;
  reward: number;        // raw env reward
  value: number;         // critic output at collection time (scaled domain)
  advantage: number;     // filled at batch assembly
  valueTarget: number;   // filled at batch assembly (scaled domain)
}

export interface EpisodeResult {
  steps: StepRecord[];
  sequence: number[][];
  totalReward: number;
  episodeSeed: number;
}

export interface TrainOptions {
  episodes: number;
  seed: number;
  outDir?: string;          // checkpoints + learning curve CSV
  episodeSeedBase?: number; // env seeds cycle from here (defaults to seed)
  onEpisode?: (ep: number, result: EpisodeResult) => void;
}

export interface TrainSummary {
  episodeReturns: number[];
  bestSequence: number[][];
  bestReturn: number;
  episodes: number;
  rewardScale: number;
}

export function maskFromView(view: EnvView): MaskInfo {
  return { selectable: view.mask, minSize: view.min_size, maxSize: view.max_size };
}

/** Generalized advantage estimation over one episode (terminal value 0). */
export function computeGae(rewards: number[], values: number[], gamma: number,
                           lam: number): { advantages: number[]; targets: number[] } {
  const n = rewards.length;
  const advantages = new Array(n).fill(0);
  let gae = 0;
  for (let t = n - 1; t >= 0; t--) {
    const nextValue = t + 1 < n ? values[t + 1] : 0;
    const delta = rewards[t] + gamma * nextValue - values[t];
    gae = delta + gamma * lam * gae;
    advantages[t] = gae;
  }
  const targets = advantages.map((a, t) => a + values[t]);
  return { advantages, targets };
}

class Adam {
  private m = new Map<string, Float64Array>();
  private v = new Map<string, Float64Array>();
  private t = 0;

  constructor(private lr: number, private beta1 = 0.9, private beta2 = 0.999,
              private eps = 1e-8) {}

  step(params: [string, Tensor][]): void {
    this.t += 1;
    const bc1 = 1 - Math.pow(this.beta1, this.t);
    const bc2 = 1 - Math.pow(this.beta2, this.t);
    for (const [name, p] of params) {
      if (!p.grad) continue;
      let m = this.m.get(name);
      let v = this.v.get(name);
      if (!m) { m = new Float64Array(p.size); this.m.set(name, m); }
      if (!v) { v = new Float64Array(p.size); this.v.set(name, v); }
      for (let i = 0; i < p.size; i++) {
        const g = p.grad[i];
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g;
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * g * g;
        p.data[i] -= this.lr * (m[i] / bc1) / (Math.sqrt(v[i] / bc2) + this.eps);
      }
    }
  }
}

/** Global-norm gradient clipping. */
function clipGradNorm(params: [string, Tensor][], maxNorm: number): void {
  let total = 0;
  for (const [, p] of params) {
    if (!p.grad) continue;
    for (let i = 0; i < p.size; i++) total += p.grad[i] * p.grad[i];
  }
  const norm = Math.sqrt(total);
  if (norm <= maxNorm) return;
  const s = maxNorm / norm;
  for (const [, p] of params) {
    if (!p.grad) continue;
    for (let i = 0; i < p.size; i++) p.grad[i] *= s;
  }
}

export interface BatchLoss {
  loss: Tensor;
  surrogate: number;
  valueLoss: number;
  entropy: number;
}

/**
 * PPO loss on a minibatch of step records: minimize
 * -(clipped surrogate) + c1 * value error - c2 * entropy.
 */
export function batchLoss(model: TppoModel, batch: StepRecord[],
                          advScale: { mean: number; std: number }): BatchLoss {
  const cfg = model.cfg;
  const ratios: Tensor[] = [];
  const valueErrors: Tensor[] = [];
  const entropies: Tensor[] = [];
  const advantages: number[] = [];
  for (const record of batch) {
    const { x, g } = featureTensors({ x: record.x, x_shape: record.xShape, g: record.g });
    const { logProb, entropy } = actionLogProb(model, x, g, record.mask,
                                               record.orderedPicks, record.size);
    const ratio = exp(sub(logProb, constant(1, 1, [record.logProb])));
    ratios.push(ratio);
    entropies.push(entropy);
    const value = model.value(x, g);
    const err = sub(value, constant(1, 1, [record.valueTarget]));
    valueErrors.push(mul(err, err));
    advantages.push((record.advantage - advScale.mean) / advScale.std);
  }
  const ratioRow = stackRows(ratios);
  const advRow = constant(ratios.length, 1, advantages);
  const surr1 = mul(ratioRow, advRow);
  const surr2 = mul(clip(ratioRow, 1 - cfg.clipEpsilon, 1 + cfg.clipEpsilon), advRow);
  const surrogate = meanAll(minimum(surr1, surr2));
  const valueLoss = meanAll(stackRows(valueErrors));
  const entropy = meanAll(stackRows(entropies));
  const loss = add(
    add(scale(surrogate, -1), scale(valueLoss, cfg.valueCoef)),
    scale(entropy, -cfg.entropyCoef));
  return {
    loss,
    surrogate: surrogate.data[0],
    valueLoss: valueLoss.data[0],
    entropy: entropy.data[0],
  };
}

export class TppoTrainer {
  readonly model: TppoModel;
  private optimizer: Adam;
  private rng: Rng;
  rewardScale: number | null = null;

  constructor(readonly client: BridgeClient, readonly info: InitInfo,
              readonly cfg: PolicyConfig, seed: number) {
    this.model = new TppoModel(cfg, seed);
    this.optimizer = new Adam(cfg.learningRate);
    this.rng = new Rng(seed ^ 0x5f3759df);
  }

  /** Run one episode with the sampling policy; critic values recorded raw. */
  async collectEpisode(episodeSeed: number): Promise<EpisodeResult> {
    const steps: StepRecord[] = [];
    let view: EnvView = await this.client.reset(episodeSeed);
    let totalReward = 0;
    let sequence: number[][] = [];
    for (;;) {
      const mask = maskFromView(view);
      const { x, g } = featureTensors(view.state);
      resetTape();
      const sampled: SampledAction = sampleAction(this.model, x, g, mask, this.rng);
      const value = this.model.value(x, g).data[0];
      const stepView = await this.client.step(sampled.action);
      totalReward += stepView.reward;
      steps.push({
        x: view.state.x, xShape: view.state.x_shape, g: view.state.g,
        mask, orderedPicks: sampled.orderedPicks, size: sampled.size,
        logProb: sampled.logProb, reward: stepView.reward, value,
        advantage: 0, valueTarget: 0,
      });
      sequence = stepView.state.sequence;
      if (stepView.done) break;
      view = stepView;
    }
    return { steps, sequence, totalReward, episodeSeed };
  }

  /** Fill advantages/targets for the episodes of one batch and update. */
  private assembleAndUpdate(episodes: EpisodeResult[]):
      { surrogate: number; valueLoss: number; entropy: number } {
    if (this.rewardScale === null) {
      const meanAbs = episodes.reduce((a, e) => a + Math.abs(e.totalReward), 0)
        / episodes.length;
      this.rewardScale = Math.max(meanAbs, 1e-9);
    }
    const records: StepRecord[] = [];
    for (const episode of episodes) {
      const rewards = episode.steps.map((s) => s.reward / this.rewardScale!);
      const values = episode.steps.map((s) => s.value);
      const { advantages, targets } = computeGae(rewards, values,
                                                 this.cfg.gamma, this.cfg.gaeLambda);
      episode.steps.forEach((s, i) => {
        s.advantage = advantages[i];
        s.valueTarget = targets[i];
      });
      records.push(...episode.steps);
    }
    return this.update(records);
  }

  update(records: StepRecord[]): { surrogate: number; valueLoss: number; entropy: number } {
    const all = records.slice();
    const mean = all.reduce((acc, s) => acc + s.advantage, 0) / all.length;
    const variance = all.reduce((acc, s) => acc + (s.advantage - mean) ** 2, 0) / all.length;
    const advScale = { mean, std: Math.sqrt(variance) + 1e-8 };
    let last = { surrogate: 0, valueLoss: 0, entropy: 0 };
    for (let epoch = 0; epoch < this.cfg.epochsPerBatch; epoch++) {
      this.rng.shuffle(all);
      for (let start = 0; start < all.length; start += this.cfg.minibatchSize) {
        const batch = all.slice(start, start + this.cfg.minibatchSize);
        resetTape();
        this.model.zeroGrads();
        const { loss, surrogate, valueLoss, entropy } = batchLoss(this.model, batch, advScale);
        backward(loss);
        clipGradNorm(this.model.parameterList(), 0.5);
        this.optimizer.step(this.model.parameterList());
        last = { surrogate, valueLoss, entropy };
      }
    }
    return last;
  }

  async train(options: TrainOptions): Promise<TrainSummary> {
    const episodeReturns: number[] = [];
    let bestReturn = -Infinity;
    let bestSequence: number[][] = [];
    const seedBase = options.episodeSeedBase ?? options.seed;
    let pending: EpisodeResult[] = [];
    const curve: string[] = ["episode,return,surrogate,value_loss,entropy"];
    let lastStats = { surrogate: NaN, valueLoss: NaN, entropy: NaN };
    const dump = (episodesDone: number) => {
      if (!options.outDir) return;
      fs.mkdirSync(options.outDir, { recursive: true });
      fs.writeFileSync(path.join(options.outDir, "learning_curve.csv"),
                       curve.join("\n") + "\n");
      fs.writeFileSync(path.join(options.outDir, "checkpoint.json"),
                       JSON.stringify({ config: this.cfg, episodes: episodesDone,
                                        params: this.model.serialize() }));
      fs.writeFileSync(path.join(options.outDir, "best_sequence.txt"),
                       JSON.stringify(bestSequence) + "\n");
    };
    let ep = 0;
    try {
      for (; ep < options.episodes; ep++) {
        const episodeSeed = seedBase + (ep % 64);
        const result = await this.collectEpisode(episodeSeed);
        episodeReturns.push(result.totalReward);
        if (result.totalReward > bestReturn) {
          bestReturn = result.totalReward;
          bestSequence = result.sequence;
        }
        pending.push(result);
        if (pending.length >= this.cfg.episodesPerBatch) {
          lastStats = this.assembleAndUpdate(pending);
          pending = [];
        }
        curve.push([ep, result.totalReward, lastStats.surrogate,
                    lastStats.valueLoss, lastStats.entropy].join(","));
        options.onEpisode?.(ep, result);
      }
    } catch (err) {
      dump(ep); // resumable checkpoint on bridge loss or mid-run failure
      throw err;
    }
    dump(ep);
    return { episodeReturns, bestSequence, bestReturn,
             episodes: options.episodes, rewardScale: this.rewardScale ?? 1 };
  }

  /** Greedy rollout at a fixed env seed; returns the realized sequence. */
  async greedyRollout(episodeSeed: number): Promise<{ sequence: number[][]; reward: number }> {
    let view: EnvView = await this.client.reset(episodeSeed);
    let total = 0;
    for (;;) {
      resetTape();
      const { x, g } = featureTensors(view.state);
      const action = greedyAction(this.model, x, g, maskFromView(view));
      const stepView = await this.client.step(action.action);
      total += stepView.reward;
      if (stepView.done) return { sequence: stepView.state.sequence, reward: total };
      view = stepView;
    }
  }
}

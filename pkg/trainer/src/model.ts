/**
 * Character-level recurrent language model (single-layer GRU) trained with
 * teacher forcing: the loss on a sequence is the sum over target positions
 * of the negative log-probability of the true next token given everything
 * before it. Written against plain Float64Arrays with hand-derived
 * gradients; the test suite checks them against finite differences.
 */

import { mulberry32 } from "./rng.js";

export interface ModelConfig {
  vocabSize: number;
  embedDim: number;
  hiddenDim: number;
}

export interface Param {
  rows: number;
  cols: number;
  data: Float64Array;
}

export type ParamSet = Record<string, Param>;

/** Fixed parameter order; serialization and the optimizer both rely on it. */
export const PARAM_NAMES = [
  "embed", "wz", "uz", "bz", "wr", "ur", "br", "wc", "uc", "bc", "wo", "bo",
] as const;

function param(rows: number, cols: number): Param {
  return { rows, cols, data: new Float64Array(rows * cols) };
}

function matvec(a: Param, x: Float64Array, out: Float64Array, accumulate = false): void {
  const { rows, cols, data } = a;
  for (let i = 0; i < rows; i++) {
    let sum = accumulate ? out[i] : 0;
    const base = i * cols;
    for (let j = 0; j < cols; j++) sum += data[base + j] * x[j];
    out[i] = sum;
  }
}

/** out += A^T y (gradient flowing back through a matvec). */
function matTvecAdd(a: Param, y: Float64Array, out: Float64Array): void {
  const { rows, cols, data } = a;
  for (let i = 0; i < rows; i++) {
    const yi = y[i];
    if (yi === 0) continue;
    const base = i * cols;
    for (let j = 0; j < cols; j++) out[j] += data[base + j] * yi;
  }
}

/** dA += y x^T. */
function addOuter(da: Param, y: Float64Array, x: Float64Array): void {
  const { cols, data } = da;
  for (let i = 0; i < y.length; i++) {
    const yi = y[i];
    if (yi === 0) continue;
    const base = i * cols;
    for (let j = 0; j < cols; j++) data[base + j] += yi * x[j];
  }
}

function addInto(target: Float64Array, source: Float64Array): void {
  for (let i = 0; i < target.length; i++) target[i] += source[i];
}

function sigmoid(v: number): number {
  return 1 / (1 + Math.exp(-v));
}

function softmaxInPlace(logits: Float64Array): void {
  let max = -Infinity;
  for (const v of logits) if (v > max) max = v;
  let sum = 0;
  for (let i = 0; i < logits.length; i++) {
    logits[i] = Math.exp(logits[i] - max);
    sum += logits[i];
  }
  for (let i = 0; i < logits.length; i++) logits[i] /= sum;
}

interface StepCache {
  token: number;
  z: Float64Array;
  r: Float64Array;
  c: Float64Array;
  hr: Float64Array;
  hPrev: Float64Array;
  h: Float64Array;
}

export class GruLm {
  readonly config: ModelConfig;
  readonly params: ParamSet;

  constructor(config: ModelConfig, params: ParamSet) {
    this.config = config;
    this.params = params;
  }

  static init(config: ModelConfig, seed: number): GruLm {
    const { vocabSize: v, embedDim: d, hiddenDim: h } = config;
    const params: ParamSet = {
      embed: param(v, d),
      wz: param(h, d), uz: param(h, h), bz: param(h, 1),
      wr: param(h, d), ur: param(h, h), br: param(h, 1),
      wc: param(h, d), uc: param(h, h), bc: param(h, 1),
      wo: param(v, h), bo: param(v, 1),
    };
    const rand = mulberry32(seed);
    for (const name of PARAM_NAMES) {
      const p = params[name];
      if (p.cols === 1) continue; // biases start at zero
      const scale = Math.sqrt(6 / (p.rows + p.cols));
      for (let i = 0; i < p.data.length; i++) p.data[i] = (rand() * 2 - 1) * scale;
    }
    return new GruLm(config, params);
  }

  zeroGrads(): ParamSet {
    const grads: ParamSet = {};
    for (const name of PARAM_NAMES) {
      const p = this.params[name];
      grads[name] = param(p.rows, p.cols);
    }
    return grads;
  }

  private embedRow(token: number): Float64Array {
    const d = this.config.embedDim;
    return this.params.embed.data.subarray(token * d, (token + 1) * d);
  }

  /** One GRU step; returns the cache needed for backprop. */
  private step(token: number, hPrev: Float64Array): StepCache {
    const { hiddenDim: h } = this.config;
    const x = this.embedRow(token);
    const z = new Float64Array(h);
    const r = new Float64Array(h);
    const c = new Float64Array(h);
    const hr = new Float64Array(h);
    const hNew = new Float64Array(h);

    matvec(this.params.wz, x, z);
    matvec(this.params.uz, hPrev, z, true);
    matvec(this.params.wr, x, r);
    matvec(this.params.ur, hPrev, r, true);
    const { bz, br } = this.params;
    for (let i = 0; i < h; i++) {
      z[i] = sigmoid(z[i] + bz.data[i]);
      r[i] = sigmoid(r[i] + br.data[i]);
      hr[i] = r[i] * hPrev[i];
    }
    matvec(this.params.wc, x, c);
    matvec(this.params.uc, hr, c, true);
    const { bc } = this.params;
    for (let i = 0; i < h; i++) {
      c[i] = Math.tanh(c[i] + bc.data[i]);
      hNew[i] = (1 - z[i]) * hPrev[i] + z[i] * c[i];
    }
    return { token, z, r, c, hr, hPrev, h: hNew };
  }

  private logits(h: Float64Array): Float64Array {
    const out = new Float64Array(this.config.vocabSize);
    matvec(this.params.wo, h, out);
    addInto(out, this.params.bo.data);
    return out;
  }

  /** Probability distribution over the next token after consuming `tokens`. */
  nextDistribution(tokens: number[]): Float64Array {
    let h: Float64Array = new Float64Array(this.config.hiddenDim);
    for (const token of tokens) h = this.step(token, h).h;
    const probs = this.logits(h);
    softmaxInPlace(probs);
    return probs;
  }

  /**
   * Per-position probabilities of the true next token, for the steps at
   * index >= scoredFrom (the teacher-forced target positions).
   */
  scoredStepProbs(tokens: number[], scoredFrom: number): number[] {
    let h: Float64Array = new Float64Array(this.config.hiddenDim);
    const probs: number[] = [];
    for (let t = 0; t < tokens.length - 1; t++) {
      h = this.step(tokens[t], h).h;
      if (t >= scoredFrom) {
        const dist = this.logits(h);
        softmaxInPlace(dist);
        probs.push(dist[tokens[t + 1]]);
      }
    }
    return probs;
  }

  /**
   * Teacher-forced loss (sum of -ln p over scored positions) with gradients
   * accumulated into `grads`. Backpropagation runs through the whole
   * sequence, including the unscored prompt prefix.
   */
  lossAndGrads(tokens: number[], scoredFrom: number, grads: ParamSet): number {
    const { hiddenDim: h, vocabSize: v } = this.config;
    const caches: StepCache[] = [];
    const dlogitsPerStep: (Float64Array | null)[] = [];
    let hState: Float64Array = new Float64Array(h);
    let loss = 0;

    for (let t = 0; t < tokens.length - 1; t++) {
      const cache = this.step(tokens[t], hState);
      caches.push(cache);
      hState = cache.h;
      if (t >= scoredFrom) {
        const dist = this.logits(hState);
        softmaxInPlace(dist);
        const truth = tokens[t + 1];
        loss -= Math.log(Math.max(dist[truth], 1e-300));
        dist[truth] -= 1; // softmax + cross-entropy gradient
        dlogitsPerStep.push(dist);
      } else {
        dlogitsPerStep.push(null);
      }
    }

    const dh = new Float64Array(h);
    const dx = new Float64Array(this.config.embedDim);
    const dhPrev = new Float64Array(h);
    const dac = new Float64Array(h);
    const dar = new Float64Array(h);
    const daz = new Float64Array(h);
    const dhr = new Float64Array(h);

    for (let t = caches.length - 1; t >= 0; t--) {
      const cache = caches[t];
      const dlogits = dlogitsPerStep[t];
      if (dlogits !== null) {
        addOuter(grads.wo, dlogits, cache.h);
        addInto(grads.bo.data, dlogits);
        matTvecAdd(this.params.wo, dlogits, dh);
      }

      dhPrev.fill(0);
      dx.fill(0);
      dhr.fill(0);
      for (let i = 0; i < h; i++) {
        const dzi = dh[i] * (cache.c[i] - cache.hPrev[i]);
        const dci = dh[i] * cache.z[i];
        dhPrev[i] = dh[i] * (1 - cache.z[i]);
        dac[i] = dci * (1 - cache.c[i] * cache.c[i]);
        daz[i] = dzi * cache.z[i] * (1 - cache.z[i]);
      }
      const x = this.embedRow(cache.token);
      addOuter(grads.wc, dac, x);
      addOuter(grads.uc, dac, cache.hr);
      addInto(grads.bc.data, dac);
      matTvecAdd(this.params.wc, dac, dx);
      matTvecAdd(this.params.uc, dac, dhr);
      for (let i = 0; i < h; i++) {
        const dri = dhr[i] * cache.hPrev[i];
        dhPrev[i] += dhr[i] * cache.r[i];
        dar[i] = dri * cache.r[i] * (1 - cache.r[i]);
      }
      addOuter(grads.wr, dar, x);
      addOuter(grads.ur, dar, cache.hPrev);
      addInto(grads.br.data, dar);
      matTvecAdd(this.params.wr, dar, dx);
      matTvecAdd(this.params.ur, dar, dhPrev);
      addOuter(grads.wz, daz, x);
      addOuter(grads.uz, daz, cache.hPrev);
      addInto(grads.bz.data, daz);
      matTvecAdd(this.params.wz, daz, dx);
      matTvecAdd(this.params.uz, daz, dhPrev);

      const embedBase = cache.token * this.config.embedDim;
      for (let j = 0; j < dx.length; j++) grads.embed.data[embedBase + j] += dx[j];

      dh.set(dhPrev);
    }
    return loss;
  }

  /** Greedy decoding: argmax until EOS (id 2) or the new-token budget. */
  greedy(prefixTokens: number[], maxNewTokens: number, eosId: number): number[] {
    let h: Float64Array = new Float64Array(this.config.hiddenDim);
    for (const token of prefixTokens) h = this.step(token, h).h;
    const generated: number[] = [];
    for (let i = 0; i < maxNewTokens; i++) {
      const dist = this.logits(h);
      let best = 0;
      for (let j = 1; j < dist.length; j++) if (dist[j] > dist[best]) best = j;
      if (best === eosId) break;
      generated.push(best);
      h = this.step(best, h).h;
    }
    return generated;
  }

  serialize(): Record<string, unknown> {
    const weights: Record<string, { rows: number; cols: number; b64: string }> = {};
    for (const name of PARAM_NAMES) {
      const p = this.params[name];
      weights[name] = {
        rows: p.rows,
        cols: p.cols,
        b64: Buffer.from(p.data.buffer, p.data.byteOffset, p.data.byteLength).toString("base64"),
      };
    }
    return { config: this.config, weights };
  }

  static deserialize(obj: any): GruLm {
    const config: ModelConfig = obj.config;
    const params: ParamSet = {};
    for (const name of PARAM_NAMES) {
      const w = obj.weights[name];
      const raw = Buffer.from(w.b64, "base64");
      const data = new Float64Array(raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength));
      params[name] = { rows: w.rows, cols: w.cols, data };
    }
    return new GruLm(config, params);
  }
}

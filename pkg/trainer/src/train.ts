/**
 * Fine-tuning loop (teacher-forced cross-entropy, Adam) and artifact IO.
 *
 * An artifact directory holds weights.json, tokenizer.json, and
 * manifest.json (stage, hyperparameters, corpus hash, final loss), so a
 * served model can always be traced back to the exact pair file it was
 * trained on.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { readPairsForStage, sha256File, Stage, TrainPair } from "./data.js";
import { SequenceScorer } from "./loss.js";
import { GruLm, PARAM_NAMES, ParamSet } from "./model.js";
import { mulberry32, shuffleInPlace } from "./rng.js";
import { EOS, Tokenizer } from "./tokenizer.js";

export interface TrainHparams {
  batchSize: number;
  epochs: number;
  learningRate: number;
  maxInputTokens: number;
  maxTargetTokens: number;
  seed: number;
  baseCheckpointId: string;
  embedDim: number;
  hiddenDim: number;
  /** Global gradient-norm clip; keeps high learning rates stable. */
  gradClip: number;
}

export const DEFAULT_HPARAMS: TrainHparams = {
  batchSize: 8,
  epochs: 10,
  learningRate: 3e-4,
  maxInputTokens: 256,
  maxTargetTokens: 128,
  seed: 0,
  baseCheckpointId: "scratch-gru",
  embedDim: 32,
  hiddenDim: 96,
  gradClip: 5.0,
};

export interface Manifest {
  stage: Stage;
  hparams: TrainHparams;
  dataHash: string;
  nPairs: number;
  finalLoss: number;
  lossPerEpoch: number[];
}

class Adam {
  private readonly m: ParamSet;
  private readonly v: ParamSet;
  private step = 0;

  constructor(private readonly model: GruLm,
              private readonly lr: number,
              private readonly beta1 = 0.9,
              private readonly beta2 = 0.999,
              private readonly eps = 1e-8) {
    this.m = model.zeroGrads();
    this.v = model.zeroGrads();
  }

  update(grads: ParamSet, scale: number, gradClip: number): void {
    let sq = 0;
    for (const name of PARAM_NAMES) {
      const g = grads[name].data;
      for (let i = 0; i < g.length; i++) sq += (g[i] * scale) ** 2;
    }
    const norm = Math.sqrt(sq);
    const clip = gradClip > 0 && norm > gradClip ? gradClip / norm : 1;

    this.step += 1;
    const c1 = 1 - Math.pow(this.beta1, this.step);
    const c2 = 1 - Math.pow(this.beta2, this.step);
    for (const name of PARAM_NAMES) {
      const p = this.model.params[name].data;
      const g = grads[name].data;
      const m = this.m[name].data;
      const v = this.v[name].data;
      for (let i = 0; i < p.length; i++) {
        const grad = g[i] * scale * clip;
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * grad;
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * grad * grad;
        p[i] -= (this.lr * (m[i] / c1)) / (Math.sqrt(v[i] / c2) + this.eps);
      }
    }
  }
}

function truncatePairs(pairs: TrainPair[], hparams: TrainHparams): TrainPair[] {
  let truncated = 0;
  const out = pairs.map((pair) => {
    const input = [...pair.input].slice(0, hparams.maxInputTokens).join("");
    const target = [...pair.target].slice(0, hparams.maxTargetTokens).join("");
    if (input.length !== pair.input.length || target.length !== pair.target.length) {
      truncated += 1;
    }
    return { ...pair, input, target };
  });
  if (truncated > 0) {
    console.warn(`warning: right-truncated ${truncated} pair(s) to fit the token limits`);
  }
  return out;
}

/** Fine-tune one stage model on its pair file and write the artifact. */
export function train(stage: Stage, pairsPath: string, hparams: TrainHparams,
                      outDir: string): Manifest {
  const pairs = truncatePairs(readPairsForStage(pairsPath, stage), hparams);
  const tokenizer = Tokenizer.fromCorpus(pairs.flatMap((p) => [p.input, p.target]));
  const model = GruLm.init(
    { vocabSize: tokenizer.vocabSize, embedDim: hparams.embedDim, hiddenDim: hparams.hiddenDim },
    hparams.seed,
  );
  const encoded = pairs.map((p) => tokenizer.encodePair(p.input, p.target));
  const optimizer = new Adam(model, hparams.learningRate);
  const shuffleRand = mulberry32(hparams.seed + 1);

  const lossPerEpoch: number[] = [];
  const order = encoded.map((_, i) => i);
  for (let epoch = 0; epoch < hparams.epochs; epoch++) {
    shuffleInPlace(order, shuffleRand);
    let epochLoss = 0;
    for (let start = 0; start < order.length; start += hparams.batchSize) {
      const batch = order.slice(start, start + hparams.batchSize);
      const grads = model.zeroGrads();
      let batchLoss = 0;
      for (const index of batch) {
        const { tokens, scoredFrom } = encoded[index];
        batchLoss += model.lossAndGrads(tokens, scoredFrom, grads);
      }
      optimizer.update(grads, 1 / batch.length, hparams.gradClip);
      epochLoss += batchLoss;
    }
    lossPerEpoch.push(epochLoss / encoded.length);
  }

  const manifest: Manifest = {
    stage,
    hparams,
    dataHash: sha256File(pairsPath),
    nPairs: pairs.length,
    finalLoss: lossPerEpoch[lossPerEpoch.length - 1] ?? NaN,
    lossPerEpoch,
  };
  saveArtifact(outDir, model, tokenizer, manifest);
  return manifest;
}

export function saveArtifact(dir: string, model: GruLm, tokenizer: Tokenizer,
                             manifest: Manifest): void {
  mkdirSync(dir, { recursive: true });
  writeFileSync(join(dir, "weights.json"), JSON.stringify(model.serialize()));
  writeFileSync(join(dir, "tokenizer.json"), JSON.stringify(tokenizer.toJSON()));
  writeFileSync(join(dir, "manifest.json"), JSON.stringify(manifest, null, 2) + "\n");
}

/** A trained artifact: scoring plus greedy generation behind one object. */
export class ArtifactModel implements SequenceScorer {
  constructor(readonly model: GruLm, readonly tokenizer: Tokenizer,
              readonly manifest: Manifest) {}

  static load(dir: string): ArtifactModel {
    const model = GruLm.deserialize(JSON.parse(readFileSync(join(dir, "weights.json"), "utf-8")));
    const tokenizer = Tokenizer.fromJSON(
      JSON.parse(readFileSync(join(dir, "tokenizer.json"), "utf-8")));
    const manifest = JSON.parse(readFileSync(join(dir, "manifest.json"), "utf-8"));
    return new ArtifactModel(model, tokenizer, manifest);
  }

  /** Probabilities of the true next token at each target position (incl. the end marker). */
  stepProbs(input: string, target: string): number[] {
    const { tokens, scoredFrom } = this.tokenizer.encodePair(input, target);
    return this.model.scoredStepProbs(tokens, scoredFrom);
  }

  /** Greedy (temperature-0) completion for a prompt. */
  generate(prompt: string, maxNewTokens: number): string {
    const prefix = this.tokenizer.promptTokens(prompt);
    return this.tokenizer.decode(this.model.greedy(prefix, maxNewTokens, EOS));
  }

  /** Exact-match regeneration rate of targets under greedy decoding. */
  exactMatchRate(pairs: TrainPair[]): number {
    let hits = 0;
    for (const pair of pairs) {
      const budget = [...pair.target].length + 8;
      if (this.generate(pair.input, budget) === pair.target) hits += 1;
    }
    return hits / pairs.length;
  }
}

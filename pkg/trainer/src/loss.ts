/**
 * Sequence-level cross-entropy evaluation over an abstract scorer, so the
 * arithmetic can be checked against hand-computed probabilities independently
 * of any real model.
 */

import { EmptyDataset, TrainPair } from "./data.js";

export interface SequenceScorer {
  /**
   * Teacher-forced probabilities of the true token at every target position
   * of one (input, target) pair, in order.
   */
  stepProbs(input: string, target: string): number[];
}

/** Sum over target positions of -ln p for one pair. */
export function sequenceLoss(scorer: SequenceScorer, pair: TrainPair): number {
  let loss = 0;
  for (const p of scorer.stepProbs(pair.input, pair.target)) {
    loss -= Math.log(p);
  }
  return loss;
}

/** Mean per-sequence cross-entropy over a pair set; no gradients involved. */
export function evalLoss(scorer: SequenceScorer, pairs: TrainPair[]): number {
  if (pairs.length === 0) {
    throw new EmptyDataset("cannot evaluate loss on an empty pair set");
  }
  let total = 0;
  for (const pair of pairs) total += sequenceLoss(scorer, pair);
  return total / pairs.length;
}

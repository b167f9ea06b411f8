/** Pair-file reading (JSONL: {"stage","input","target"}) and corpus hashing. */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

export type Stage = "hint" | "code";

export interface TrainPair {
  stage: Stage;
  input: string;
  target: string;
}

export class StageMismatch extends Error {}
export class EmptyDataset extends Error {}
export class PairSchemaError extends Error {}

export function readPairs(path: string): TrainPair[] {
  const pairs: TrainPair[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  lines.forEach((line, index) => {
    const trimmed = line.trim();
    if (!trimmed) return;
    let obj: any;
    try {
      obj = JSON.parse(trimmed);
    } catch {
      throw new PairSchemaError(`${path}: line ${index + 1}: not valid JSON`);
    }
    if (
      (obj.stage !== "hint" && obj.stage !== "code") ||
      typeof obj.input !== "string" || obj.input.length === 0 ||
      typeof obj.target !== "string" || obj.target.length === 0
    ) {
      throw new PairSchemaError(`${path}: line ${index + 1}: bad pair record`);
    }
    pairs.push({ stage: obj.stage, input: obj.input, target: obj.target });
  });
  return pairs;
}

/** Load pairs for one stage; a single foreign-stage pair is an error. */
export function readPairsForStage(path: string, stage: Stage): TrainPair[] {
  const pairs = readPairs(path);
  if (pairs.length === 0) {
    throw new EmptyDataset(`${path}: no training pairs`);
  }
  const foreign = pairs.find((p) => p.stage !== stage);
  if (foreign) {
    throw new StageMismatch(`${path}: expected only "${stage}" pairs, found "${foreign.stage}"`);
  }
  return pairs;
}

export function sha256File(path: string): string {
  return createHash("sha256").update(readFileSync(path)).digest("hex");
}

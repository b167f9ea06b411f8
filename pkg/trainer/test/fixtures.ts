import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { Stage, TrainPair } from "../src/data.js";

/** 16 short code-stage pairs; small enough to memorize inside 100 epochs. */
export function toyCodePairs(): TrainPair[] {
  const specs: Array<[string, string, string]> = [
    ["add 2 and 3", "use plus", "result = 2 + 3"],
    ["add 7 and 5", "use plus", "result = 7 + 5"],
    ["take 9 minus 4", "use minus", "result = 9 - 4"],
    ["take 8 minus 6", "use minus", "result = 8 - 6"],
    ["times 3 by 4", "use times", "result = 3 * 4"],
    ["times 6 by 2", "use times", "result = 6 * 2"],
    ["share 8 over 2", "use slash", "result = 8 / 2"],
    ["share 9 over 3", "use slash", "result = 9 / 3"],
    ["add 1 and 9", "use plus", "result = 1 + 9"],
    ["take 7 minus 2", "use minus", "result = 7 - 2"],
    ["times 5 by 5", "use times", "result = 5 * 5"],
    ["share 6 over 3", "use slash", "result = 6 / 3"],
    ["add 4 and 4", "use plus", "result = 4 + 4"],
    ["take 5 minus 1", "use minus", "result = 5 - 1"],
    ["times 2 by 9", "use times", "result = 2 * 9"],
    ["share 4 over 2", "use slash", "result = 4 / 2"],
  ];
  return specs.map(([question, hint, target]) => ({
    stage: "code" as Stage,
    input: `${question} ## ${hint}`,
    target,
  }));
}

export function toyHintPairs(): TrainPair[] {
  return toyCodePairs().map((pair) => ({
    stage: "hint" as Stage,
    input: pair.input.split(" ## ")[0],
    target: pair.input.split(" ## ")[1],
  }));
}

export function writePairsFile(pairs: TrainPair[], name: string): string {
  const dir = mkdtempSync(join(tmpdir(), "gfp-trainer-"));
  const path = join(dir, name);
  writeFileSync(path, pairs.map((p) => JSON.stringify(p)).join("\n") + "\n");
  return path;
}

export function freshDir(): string {
  return mkdtempSync(join(tmpdir(), "gfp-artifact-"));
}

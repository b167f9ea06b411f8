/**
 * Trainer CLI: `train`, `serve`, and `eval-loss` subcommands.
 *
 *   node dist/cli.js train --stage code --pairs code_pairs.jsonl --out artifacts/code
 *   node dist/cli.js serve --artifact artifacts/code --port 8411
 *   node dist/cli.js eval-loss --artifact artifacts/code --pairs held_out.jsonl
 */

import { parseArgs } from "node:util";

import { readPairsForStage, Stage } from "./data.js";
import { evalLoss } from "./loss.js";
import { loadArtifactOrThrow, serve } from "./server.js";
import { DEFAULT_HPARAMS, train, TrainHparams } from "./train.js";

function usage(): never {
  console.error(
    "usage: cli.js train --stage hint|code --pairs FILE --out DIR [hparam flags]\n" +
    "       cli.js serve --artifact DIR --port N\n" +
    "       cli.js eval-loss --artifact DIR --pairs FILE\n" +
    "hparam flags: --epochs N --batch-size N --learning-rate F --seed N\n" +
    "              --embed-dim N --hidden-dim N --max-input-tokens N\n" +
    "              --max-target-tokens N --base-checkpoint-id ID --grad-clip F",
  );
  process.exit(2);
}

function requireStage(value: string | undefined): Stage {
  if (value !== "hint" && value !== "code") usage();
  return value;
}

function hparamsFromFlags(values: Record<string, string | undefined>): TrainHparams {
  const pick = (flag: string, fallback: number) => {
    const raw = values[flag];
    if (raw === undefined) return fallback;
    const parsed = Number(raw);
    if (!Number.isFinite(parsed)) usage();
    return parsed;
  };
  return {
    batchSize: pick("batch-size", DEFAULT_HPARAMS.batchSize),
    epochs: pick("epochs", DEFAULT_HPARAMS.epochs),
    learningRate: pick("learning-rate", DEFAULT_HPARAMS.learningRate),
    maxInputTokens: pick("max-input-tokens", DEFAULT_HPARAMS.maxInputTokens),
    maxTargetTokens: pick("max-target-tokens", DEFAULT_HPARAMS.maxTargetTokens),
    seed: pick("seed", DEFAULT_HPARAMS.seed),
    baseCheckpointId: values["base-checkpoint-id"] ?? DEFAULT_HPARAMS.baseCheckpointId,
    embedDim: pick("embed-dim", DEFAULT_HPARAMS.embedDim),
    hiddenDim: pick("hidden-dim", DEFAULT_HPARAMS.hiddenDim),
    gradClip: pick("grad-clip", DEFAULT_HPARAMS.gradClip),
  };
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2);
  const options = {
    stage: { type: "string" as const },
    pairs: { type: "string" as const },
    out: { type: "string" as const },
    artifact: { type: "string" as const },
    port: { type: "string" as const },
    epochs: { type: "string" as const },
    "batch-size": { type: "string" as const },
    "learning-rate": { type: "string" as const },
    seed: { type: "string" as const },
    "embed-dim": { type: "string" as const },
    "hidden-dim": { type: "string" as const },
    "max-input-tokens": { type: "string" as const },
    "max-target-tokens": { type: "string" as const },
    "base-checkpoint-id": { type: "string" as const },
    "grad-clip": { type: "string" as const },
  };
  let values: Record<string, string | undefined>;
  try {
    values = parseArgs({ args: rest, options, allowPositionals: false }).values;
  } catch (err) {
    console.error(String(err));
    usage();
  }

  switch (command) {
    case "train": {
      if (!values.pairs || !values.out) usage();
      const stage = requireStage(values.stage);
      const manifest = train(stage, values.pairs, hparamsFromFlags(values), values.out);
      console.error(
        `trained ${stage} model on ${manifest.nPairs} pairs, ` +
        `final loss ${manifest.finalLoss.toFixed(4)}, artifact ${values.out}`);
      break;
    }
    case "serve": {
      if (!values.artifact || !values.port) usage();
      const port = Number(values.port);
      if (!Number.isInteger(port) || port < 0) usage();
      const server = await serve(values.artifact, port);
      const address = server.address();
      const bound = typeof address === "object" && address ? address.port : port;
      console.error(`serving ${values.artifact} on http://127.0.0.1:${bound}/generate`);
      break;
    }
    case "eval-loss": {
      if (!values.artifact || !values.pairs) usage();
      const artifact = loadArtifactOrThrow(values.artifact);
      const pairs = readPairsForStage(values.pairs, artifact.manifest.stage);
      console.log(evalLoss(artifact, pairs).toFixed(6));
      break;
    }
    default:
      usage();
  }
}

main().catch((err) => {
  console.error(String(err));
  process.exit(1);
});

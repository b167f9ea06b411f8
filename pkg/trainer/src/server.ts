/**
 * Minimal generation endpoint: POST /generate with
 * {"prompt": str, "max_new_tokens": int, "temperature": num} returns
 * {"text": str}. Decoding is greedy, so identical requests produce identical
 * responses; the server keeps no state between requests.
 */

import { createServer, IncomingMessage, Server, ServerResponse } from "node:http";

import { ArtifactModel } from "./train.js";

export class LoadFailure extends Error {}
export class PortInUse extends Error {}

const DEFAULT_MAX_NEW_TOKENS = 128;
const MAX_BODY_BYTES = 1 << 20;

function readBody(req: IncomingMessage): Promise<string> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    let size = 0;
    req.on("data", (chunk: Buffer) => {
      size += chunk.length;
      if (size > MAX_BODY_BYTES) {
        reject(new Error("request body too large"));
        req.destroy();
        return;
      }
      chunks.push(chunk);
    });
    req.on("end", () => resolve(Buffer.concat(chunks).toString("utf-8")));
    req.on("error", reject);
  });
}

function sendJson(res: ServerResponse, status: number, payload: unknown): void {
  const data = JSON.stringify(payload);
  res.writeHead(status, { "Content-Type": "application/json" });
  res.end(data);
}

interface GenerateRequest {
  prompt: string;
  maxNewTokens: number;
}

/** Returns the parsed request or an error message for a 400 reply. */
function parseGenerateBody(raw: string): GenerateRequest | string {
  let obj: any;
  try {
    obj = JSON.parse(raw);
  } catch {
    return "body is not valid JSON";
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    return "body must be a JSON object";
  }
  if (typeof obj.prompt !== "string") {
    return "'prompt' must be a string";
  }
  let maxNewTokens = DEFAULT_MAX_NEW_TOKENS;
  if (obj.max_new_tokens !== undefined) {
    if (!Number.isInteger(obj.max_new_tokens) || obj.max_new_tokens < 1) {
      return "'max_new_tokens' must be a positive integer";
    }
    maxNewTokens = obj.max_new_tokens;
  }
  if (obj.temperature !== undefined && typeof obj.temperature !== "number") {
    return "'temperature' must be a number";
  }
  return { prompt: obj.prompt, maxNewTokens };
}

export function buildServer(artifact: ArtifactModel): Server {
  return createServer(async (req, res) => {
    if (req.method !== "POST" || req.url !== "/generate") {
      sendJson(res, 404, { error: "POST /generate is the only endpoint" });
      return;
    }
    let raw: string;
    try {
      raw = await readBody(req);
    } catch (err) {
      sendJson(res, 400, { error: String(err) });
      return;
    }
    const parsed = parseGenerateBody(raw);
    if (typeof parsed === "string") {
      sendJson(res, 400, { error: parsed });
      return;
    }
    sendJson(res, 200, { text: artifact.generate(parsed.prompt, parsed.maxNewTokens) });
  });
}

export function loadArtifactOrThrow(dir: string): ArtifactModel {
  try {
    return ArtifactModel.load(dir);
  } catch (err) {
    throw new LoadFailure(`cannot load artifact from ${dir}: ${err}`);
  }
}

export function serve(artifactDir: string, port: number): Promise<Server> {
  const artifact = loadArtifactOrThrow(artifactDir);
  const server = buildServer(artifact);
  return new Promise((resolve, reject) => {
    server.once("error", (err: NodeJS.ErrnoException) => {
      if (err.code === "EADDRINUSE") {
        reject(new PortInUse(`port ${port} is already in use`));
      } else {
        reject(err);
      }
    });
    server.listen(port, "127.0.0.1", () => resolve(server));
  });
}

/**
 * Character-level tokenizer with four special tokens.
 *
 * A training/inference sequence is laid out as
 *   [BOS] input-chars [SEP] target-chars [EOS]
 * and the model is scored only on the positions that predict the target
 * chars and the closing EOS.
 */

export const BOS = 0;
export const SEP = 1;
export const EOS = 2;
export const UNK = 3;
export const NUM_SPECIALS = 4;

export interface EncodedPair {
  tokens: number[];
  /** Index of the first step whose prediction is scored (the SEP position). */
  scoredFrom: number;
}

export class Tokenizer {
  readonly chars: string[];
  private readonly charToId: Map<string, number>;

  constructor(chars: string[]) {
    this.chars = [...chars];
    this.charToId = new Map(this.chars.map((c, i) => [c, i + NUM_SPECIALS]));
  }

  static fromCorpus(texts: Iterable<string>): Tokenizer {
    const seen = new Set<string>();
    for (const text of texts) {
      for (const ch of text) seen.add(ch);
    }
    return new Tokenizer([...seen].sort());
  }

  get vocabSize(): number {
    return this.chars.length + NUM_SPECIALS;
  }

  encodeChars(text: string): number[] {
    return [...text].map((ch) => this.charToId.get(ch) ?? UNK);
  }

  /** Tokens for a prompt awaiting generation: [BOS] prompt [SEP]. */
  promptTokens(prompt: string): number[] {
    return [BOS, ...this.encodeChars(prompt), SEP];
  }

  /** Full teacher-forced sequence for one (input, target) pair. */
  encodePair(input: string, target: string): EncodedPair {
    const inputIds = this.encodeChars(input);
    const targetIds = this.encodeChars(target);
    const tokens = [BOS, ...inputIds, SEP, ...targetIds, EOS];
    return { tokens, scoredFrom: inputIds.length + 1 };
  }

  decode(ids: number[]): string {
    let out = "";
    for (const id of ids) {
      if (id >= NUM_SPECIALS) out += this.chars[id - NUM_SPECIALS];
    }
    return out;
  }

  toJSON(): { chars: string[] } {
    return { chars: this.chars };
  }

  static fromJSON(obj: { chars: string[] }): Tokenizer {
    return new Tokenizer(obj.chars);
  }
}

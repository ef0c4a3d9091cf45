/**
 * Generic autoregressive-model scorer: anything that can produce a next-token
 * log-probability distribution can serve per-token NLLs over the protocol.
 */

import type { AdapterSession } from "./protocol.js";

export interface CausalLM {
  /** Declared over the wire; state your NLL reduction here if it matters. */
  name: string;
  vocabSize: number;
  /**
   * Log-probabilities (nats) over the whole vocabulary for the next token
   * given `prefix`. Must be deterministic in `prefix`.
   */
  nextLogProbs(prefix: number[]): number[];
}

/**
 * Per-token NLLs: position t is scored from the distribution conditioned on
 * tokens before t. The empty prefix stands for begin-of-sequence
 * conditioning, so the first token is charged against the model's
 * no-context distribution.
 */
export function causalLmNll(lm: CausalLM, tokens: number[]): number[] {
  const nll: number[] = [];
  for (let t = 0; t < tokens.length; t++) {
    const tok = tokens[t]!;
    if (!Number.isInteger(tok) || tok < 0 || tok >= lm.vocabSize) {
      throw new Error(`token ${tok} at index ${t} outside vocabulary [0, ${lm.vocabSize})`);
    }
    const logProbs = lm.nextLogProbs(tokens.slice(0, t));
    if (logProbs.length !== lm.vocabSize) {
      throw new Error(`model returned ${logProbs.length} log-probs, expected ${lm.vocabSize}`);
    }
    nll.push(-logProbs[tok]! + 0); // + 0 turns a probability-1 hit into 0, not -0
  }
  return nll;
}

export function sessionFromCausalLm(lm: CausalLM): AdapterSession {
  return {
    name: lm.name,
    vocabSize: lm.vocabSize,
    score: (tokens) => causalLmNll(lm, tokens),
  };
}

/** Flat distribution regardless of context. */
export function uniformLm(vocabSize: number): CausalLM {
  const logProb = -Math.log(vocabSize);
  return {
    name: `uniform-lm(vocab=${vocabSize})`,
    vocabSize,
    nextLogProbs: () => new Array<number>(vocabSize).fill(logProb),
  };
}

/**
 * Puts probability 1 on (last token + 1) mod V, so any sequence following
 * that rule costs zero after its first token. The empty prefix falls back
 * to the flat distribution.
 */
export function cyclicOracleLm(vocabSize: number): CausalLM {
  const uniform = -Math.log(vocabSize);
  return {
    name: `cyclic-oracle-lm(vocab=${vocabSize})`,
    vocabSize,
    nextLogProbs: (prefix) => {
      if (prefix.length === 0) return new Array<number>(vocabSize).fill(uniform);
      const probs = new Array<number>(vocabSize).fill(-Infinity);
      probs[(prefix[prefix.length - 1]! + 1) % vocabSize] = 0.0;
      return probs;
    },
  };
}

function mix32(x: number): number {
  let h = x >>> 0;
  h ^= h >>> 16;
  h = Math.imul(h, 0x45d9f3b) >>> 0;
  h ^= h >>> 16;
  h = Math.imul(h, 0x45d9f3b) >>> 0;
  h ^= h >>> 16;
  return h >>> 0;
}

function prefixHash(seed: number, prefix: number[]): number {
  let h = mix32(seed ^ 0x9e3779b9);
  for (const tok of prefix) {
    h = mix32((h + tok + 1) >>> 0);
  }
  return h;
}

/**
 * Deterministic pseudo-random distributions keyed on the full prefix. Every
 * value is finite, so this is the stand-in for a real neural scorer in
 * end-to-end tests. Also reports its own sequence-level NLL through a
 * separate accumulation path, as an aggregation cross-check.
 */
export interface MixtureLM extends CausalLM {
  sequenceNll(tokens: number[]): number;
}

export function mixtureLm(vocabSize: number, seed: number): MixtureLM {
  const logits = (prefix: number[]): number[] => {
    const h = prefixHash(seed, prefix);
    const out = new Array<number>(vocabSize);
    for (let i = 0; i < vocabSize; i++) {
      // 4-nat logit spread keeps the softmax well away from under/overflow
      out[i] = (mix32((h + Math.imul(i, 0x85ebca6b)) >>> 0) / 2 ** 32) * 4.0 - 2.0;
    }
    return out;
  };
  const nextLogProbs = (prefix: number[]): number[] => {
    const l = logits(prefix);
    const m = Math.max(...l);
    const z = m + Math.log(l.reduce((acc, v) => acc + Math.exp(v - m), 0));
    return l.map((v) => v - z);
  };
  return {
    name: `mixture-lm(vocab=${vocabSize},seed=${seed})`,
    vocabSize,
    nextLogProbs,
    sequenceNll(tokens: number[]): number {
      // accumulated backwards, independent of causalLmNll's loop
      let total = 0.0;
      for (let t = tokens.length - 1; t >= 0; t--) {
        total -= nextLogProbs(tokens.slice(0, t))[tokens[t]!]!;
      }
      return total;
    },
  };
}

/**
 * Model-loading extension point. The built-in specs exist for tests and
 * demos; to serve a real model, add a branch here that loads your weights
 * (evaluation mode, sampling disabled), implements nextLogProbs over the
 * full token vocabulary, and declares its NLL reduction in the name.
 */
export function loadCausalLm(spec: string): CausalLM {
  const parts = spec.split(":");
  const kind = parts[0];
  if (kind === "uniform" && parts.length === 2) {
    return uniformLm(parsePositiveInt(parts[1]!, "vocab size"));
  }
  if (kind === "cycle" && parts.length === 2) {
    return cyclicOracleLm(parsePositiveInt(parts[1]!, "vocab size"));
  }
  if (kind === "mixture" && parts.length === 3) {
    return mixtureLm(
      parsePositiveInt(parts[1]!, "vocab size"),
      parsePositiveInt(parts[2]!, "seed"),
    );
  }
  throw new Error(
    `unknown model spec ${JSON.stringify(spec)}; built-ins are ` +
      `"uniform:V", "cycle:V", "mixture:V:SEED". For a real model, extend ` +
      `loadCausalLm in causal-lm.ts with a loader that implements CausalLM.`,
  );
}

function parsePositiveInt(text: string, what: string): number {
  const value = Number(text);
  if (!Number.isInteger(value) || value < 1) {
    throw new Error(`${what} must be a positive integer, got ${JSON.stringify(text)}`);
  }
  return value;
}

/**
 * Laplace n-gram scorer over the serialized model file format.
 *
 * Re-implemented from the file format alone so it cross-checks the builtin
 * scorer instead of sharing code with it. All packed keys in a valid model
 * file are below 2^53, so plain JS numbers hold them exactly.
 */

import { readFileSync } from "node:fs";

const MODEL_FORMAT = "lossprobe-ngram";
const MODEL_VERSION = 1;
const SAFE_KEY_LIMIT = 2 ** 53;

export interface NgramModel {
  order: number;
  vocabSize: number;
  alpha: number;
  bosId: number;
  base: number;
  pairKeys: number[]; // strictly increasing packed (context, next) keys
  pairCounts: number[];
  ctxKeys: number[]; // strictly increasing packed context keys
  ctxTotals: number[]; // total count per context
}

export function modelName(model: NgramModel): string {
  const alpha = Number(model.alpha.toPrecision(6));
  return `ts-ngram(order=${model.order},vocab=${model.vocabSize},alpha=${alpha})`;
}

function asInt(value: unknown, field: string): number {
  if (typeof value !== "number" || !Number.isInteger(value)) {
    throw new Error(`${field} must be an integer, got ${JSON.stringify(value)}`);
  }
  return value;
}

function asIntArray(value: unknown, field: string): number[] {
  if (!Array.isArray(value)) {
    throw new Error(`${field} must be an array`);
  }
  return value.map((v, i) => asInt(v, `${field}[${i}]`));
}

export function parseModel(doc: unknown): NgramModel {
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new Error("model file must contain a JSON object");
  }
  const d = doc as Record<string, unknown>;
  if (d.format !== MODEL_FORMAT) {
    throw new Error(`not a ${MODEL_FORMAT} file (format=${JSON.stringify(d.format)})`);
  }
  if (d.version !== MODEL_VERSION) {
    throw new Error(`unsupported model version ${JSON.stringify(d.version)}`);
  }
  const order = asInt(d.order, "order");
  const vocabSize = asInt(d.vocab_size, "vocab_size");
  const alpha = d.alpha;
  if (typeof alpha !== "number" || !(alpha > 0)) {
    throw new Error(`alpha must be a positive number, got ${JSON.stringify(alpha)}`);
  }
  if (order < 1 || vocabSize < 2) {
    throw new Error(`need order >= 1 and vocab_size >= 2, got ${order}/${vocabSize}`);
  }
  const pairKeys = asIntArray(d.pair_keys, "pair_keys");
  const pairCounts = asIntArray(d.pair_counts, "pair_counts");
  if (pairKeys.length !== pairCounts.length) {
    throw new Error("pair_keys and pair_counts differ in length");
  }
  for (let i = 0; i < pairKeys.length; i++) {
    const key = pairKeys[i]!;
    if (key >= SAFE_KEY_LIMIT) {
      throw new Error(`packed key ${key} is at or above 2^53; refusing inexact arithmetic`);
    }
    if (i > 0 && key <= pairKeys[i - 1]!) {
      throw new Error("pair_keys must be strictly increasing");
    }
    if (pairCounts[i]! < 1) {
      throw new Error("counts must be >= 1");
    }
  }
  // one (ctxKey, total) entry per distinct context, in key order
  const ctxKeys: number[] = [];
  const ctxTotals: number[] = [];
  for (let i = 0; i < pairKeys.length; i++) {
    const ctx = Math.floor(pairKeys[i]! / vocabSize);
    if (ctxKeys.length === 0 || ctxKeys[ctxKeys.length - 1] !== ctx) {
      ctxKeys.push(ctx);
      ctxTotals.push(0);
    }
    ctxTotals[ctxTotals.length - 1] = ctxTotals[ctxTotals.length - 1]! + pairCounts[i]!;
  }
  return {
    order,
    vocabSize,
    alpha,
    bosId: vocabSize,
    base: vocabSize + 1,
    pairKeys,
    pairCounts,
    ctxKeys,
    ctxTotals,
  };
}

export function loadModel(path: string): NgramModel {
  return parseModel(JSON.parse(readFileSync(path, "utf-8")));
}

/** Index of `key` in a strictly increasing array, or -1. */
function lookup(keys: number[], key: number): number {
  let lo = 0;
  let hi = keys.length;
  while (lo < hi) {
    const mid = (lo + hi) >>> 1;
    if (keys[mid]! < key) lo = mid + 1;
    else hi = mid;
  }
  return lo < keys.length && keys[lo] === key ? lo : -1;
}

/**
 * Per-token NLL in nats. Contexts are the preceding `order` tokens,
 * left-padded with the begin-of-sequence id and Horner-packed base
 * (vocab_size + 1). A seen context scores ln(total + alpha*V) minus
 * ln(count + alpha); an unseen context is exactly ln(V).
 */
export function scoreTokens(model: NgramModel, tokens: number[]): number[] {
  const { order, base, vocabSize, alpha } = model;
  const logV = Math.log(vocabSize);
  const padded = new Array<number>(order).fill(model.bosId).concat(tokens);
  const out = new Array<number>(tokens.length);
  for (let t = 0; t < tokens.length; t++) {
    const token = tokens[t]!;
    if (!Number.isInteger(token) || token < 0 || token >= vocabSize) {
      throw new Error(`token ${token} at index ${t} is outside the vocabulary [0, ${vocabSize})`);
    }
    let ctx = 0;
    for (let i = 0; i < order; i++) {
      ctx = ctx * base + padded[t + i]!;
    }
    const ci = lookup(model.ctxKeys, ctx);
    if (ci < 0) {
      out[t] = logV;
      continue;
    }
    const pi = lookup(model.pairKeys, ctx * vocabSize + token);
    const count = pi < 0 ? 0 : model.pairCounts[pi]!;
    out[t] = Math.log(model.ctxTotals[ci]! + alpha * vocabSize) - Math.log(count + alpha);
  }
  return out;
}

/**
 * Toy scoring sessions for exercising the wire protocol from either side:
 * well-behaved baselines plus two deliberately broken ones.
 */

import type { AdapterSession } from "./protocol.js";

export type StubMode = "uniform" | "oracle" | "nan" | "error";

export function stubSession(mode: StubMode, vocabSize: number): AdapterSession {
  if (!Number.isInteger(vocabSize) || vocabSize < 2) {
    throw new Error(`vocab size must be an integer >= 2, got ${vocabSize}`);
  }
  const uniform = Math.log(vocabSize);
  switch (mode) {
    case "uniform":
      return {
        name: `stub-uniform(vocab=${vocabSize})`,
        vocabSize,
        score: (tokens) => tokens.map(() => uniform),
      };
    case "oracle":
      // perfect hindsight after the first token; the first one has no
      // context, so it gets the uniform cost
      return {
        name: `stub-oracle(vocab=${vocabSize})`,
        vocabSize,
        score: (tokens) => tokens.map((_, i) => (i === 0 ? uniform : 0.0)),
      };
    case "nan":
      // valid everywhere except one poisoned position, late enough that a
      // client must scan past the first few values to notice
      return {
        name: `stub-nan(vocab=${vocabSize})`,
        vocabSize,
        score: (tokens) =>
          tokens.map((_, i) => (i === Math.min(17, tokens.length - 1) ? NaN : uniform)),
      };
    case "error":
      return {
        name: `stub-error(vocab=${vocabSize})`,
        vocabSize,
        score: () => {
          throw new Error("stub configured to fail");
        },
      };
    default:
      throw new Error(`unknown stub mode ${JSON.stringify(mode)}`);
  }
}

/**
 * Command-line entry: pick a scorer, then serve the line-delimited JSON
 * protocol on stdin/stdout until shutdown.
 *
 *   main.js ngram --model PATH          serialized count-model file
 *   main.js stub --mode M --vocab-size N   M in uniform|oracle|nan|error
 *   main.js causal-lm --model SPEC      "uniform:V" | "cycle:V" | "mixture:V:SEED"
 */

import { parseArgs } from "node:util";
import { loadModel, modelName, scoreTokens } from "./ngram.js";
import { serve, type AdapterSession } from "./protocol.js";
import { stubSession, type StubMode } from "./stub.js";
import { loadCausalLm, sessionFromCausalLm } from "./causal-lm.js";

const USAGE = `usage: main.js <command> [options]

commands:
  ngram --model PATH              serve a serialized count-model file
  stub --mode MODE --vocab-size N serve a test stub (uniform|oracle|nan|error)
  causal-lm --model SPEC          serve a next-token-distribution model
`;

const STUB_MODES: ReadonlySet<string> = new Set(["uniform", "oracle", "nan", "error"]);

function buildSession(argv: string[]): AdapterSession {
  const command = argv[0];
  const rest = argv.slice(1);
  switch (command) {
    case "ngram": {
      const { values } = parseArgs({
        args: rest,
        options: { model: { type: "string" } },
      });
      if (values.model === undefined) throw new Error("ngram needs --model PATH");
      const model = loadModel(values.model);
      return {
        name: modelName(model),
        vocabSize: model.vocabSize,
        score: (tokens) => scoreTokens(model, tokens),
      };
    }
    case "stub": {
      const { values } = parseArgs({
        args: rest,
        options: {
          mode: { type: "string" },
          "vocab-size": { type: "string" },
        },
      });
      const mode = values.mode;
      const vocabText = values["vocab-size"];
      if (mode === undefined || !STUB_MODES.has(mode)) {
        throw new Error("stub needs --mode uniform|oracle|nan|error");
      }
      if (vocabText === undefined) throw new Error("stub needs --vocab-size N");
      const vocabSize = Number(vocabText);
      if (!Number.isInteger(vocabSize)) {
        throw new Error(`--vocab-size must be an integer, got ${JSON.stringify(vocabText)}`);
      }
      return stubSession(mode as StubMode, vocabSize);
    }
    case "causal-lm": {
      const { values } = parseArgs({
        args: rest,
        options: { model: { type: "string" } },
      });
      if (values.model === undefined) throw new Error("causal-lm needs --model SPEC");
      return sessionFromCausalLm(loadCausalLm(values.model));
    }
    default:
      throw new Error(`unknown command ${JSON.stringify(command ?? "")}`);
  }
}

async function main(): Promise<number> {
  const argv = process.argv.slice(2);
  if (argv.length === 0 || argv[0] === "--help" || argv[0] === "-h") {
    process.stderr.write(USAGE);
    return argv.length === 0 ? 2 : 0;
  }
  let session: AdapterSession;
  try {
    session = buildSession(argv);
  } catch (exc) {
    process.stderr.write(`error: ${(exc as Error).message}\n`);
    process.stderr.write(USAGE);
    return 2;
  }
  return serve(session);
}

main().then(
  (code) => process.exit(code),
  (exc) => {
    process.stderr.write(`fatal: ${(exc as Error).message}\n`);
    process.exit(2);
  },
);

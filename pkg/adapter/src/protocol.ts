/**
 * Line-delimited JSON scoring server.
 *
 * One JSON object per line on stdin, one reply line on stdout, strictly in
 * order. Commands: hello (handshake), score (id + tokens -> nll array),
 * shutdown (reply, then exit 0). Anything malformed gets {"ok":false,...}
 * and the session keeps running; only shutdown or EOF ends it.
 */

import { createInterface } from "node:readline";
import type { Readable, Writable } from "node:stream";

export interface AdapterSession {
  /** Declared in the handshake; include your NLL reduction policy here. */
  name: string;
  vocabSize: number;
  /** Token list -> per-token NLL list in nats, same length. */
  score: (tokens: number[]) => number[];
}

/**
 * Serialize an NLL array by hand: JSON.stringify would silently turn
 * non-finite values into null, hiding a broken scorer. Emitting NaN /
 * Infinity literals lets the client report the exact offending index.
 */
export function encodeNll(values: number[]): string {
  const parts = values.map((v) => {
    if (Number.isFinite(v)) return JSON.stringify(v);
    if (Number.isNaN(v)) return "NaN";
    return v > 0 ? "Infinity" : "-Infinity";
  });
  return `[${parts.join(",")}]`;
}

function errorLine(message: string): string {
  return JSON.stringify({ ok: false, error: message });
}

function handleLine(session: AdapterSession, line: string): { reply: string; done: boolean } {
  let request: unknown;
  try {
    request = JSON.parse(line);
  } catch {
    return { reply: errorLine("request is not JSON"), done: false };
  }
  if (typeof request !== "object" || request === null || Array.isArray(request)) {
    return { reply: errorLine("request must be a JSON object"), done: false };
  }
  const req = request as Record<string, unknown>;
  switch (req.cmd) {
    case "hello":
      return {
        reply: JSON.stringify({
          ok: true,
          name: session.name,
          vocab_size: session.vocabSize,
          loss_base: "nats",
        }),
        done: false,
      };
    case "score": {
      const { id, tokens } = req;
      if (typeof id !== "string") {
        return { reply: errorLine("score request needs a string 'id'"), done: false };
      }
      if (!Array.isArray(tokens) || !tokens.every((t) => Number.isInteger(t))) {
        return { reply: errorLine("score request needs an integer array 'tokens'"), done: false };
      }
      let nll: number[];
      try {
        nll = session.score(tokens as number[]);
      } catch (exc) {
        return { reply: errorLine(`scoring failed: ${(exc as Error).message}`), done: false };
      }
      if (nll.length !== tokens.length) {
        return {
          reply: errorLine(`scorer returned ${nll.length} values for ${tokens.length} tokens`),
          done: false,
        };
      }
      return {
        reply: `{"ok":true,"id":${JSON.stringify(id)},"nll":${encodeNll(nll)}}`,
        done: false,
      };
    }
    case "shutdown":
      return { reply: JSON.stringify({ ok: true }), done: true };
    default:
      return { reply: errorLine(`unknown command ${JSON.stringify(req.cmd)}`), done: false };
  }
}

/** Run the request loop until shutdown or EOF. Resolves to the exit code. */
export function serve(
  session: AdapterSession,
  input: Readable = process.stdin,
  output: Writable = process.stdout,
): Promise<number> {
  return new Promise((resolve) => {
    const lines = createInterface({ input, crlfDelay: Infinity });
    let code = 0;
    const finish = (c: number) => {
      code = c;
      lines.close();
    };
    output.on("error", () => {
      // client went away; nothing sensible left to do but report I/O failure
      finish(2);
    });
    lines.on("line", (raw) => {
      const line = raw.trim();
      if (line === "") return;
      const { reply, done } = handleLine(session, line);
      output.write(reply + "\n");
      if (done) finish(0);
    });
    lines.on("close", () => resolve(code));
  });
}

"""Command-line interface.

Every subcommand is a thin shell over one library operation and is
deterministic given its inputs: seeds are flags with fixed defaults,
never wall-clock. Exit codes: 0 success, 1 validation/usage error
(including unknown flags and missing files), 2 runtime or backend
failure. The LOSSPROBE_CONFIG environment variable supplies a default
--config path for `sweep`; no other behavior is environment-driven.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__, analysis, harness, scoring, toymodel
from .core import (
    PerturbationSpec,
    PerturbWindow,
    ValidationError,
    read_sequences_jsonl,
    write_sequences_jsonl,
)
from .scoring import BackendError

CONFIG_ENV_VAR = "LOSSPROBE_CONFIG"


@dataclass(frozen=True)
class CommandOutcome:
    exit_code: int
    summary: str


class _Parser(argparse.ArgumentParser):
    # usage errors (unknown flags, bad values) are validation errors: exit 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError("usage", message)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="lossprobe",
        description="Perturbation-response loss profiling for autoregressive sequence models.",
    )
    parser.add_argument("--version", action="version", version=f"lossprobe {__version__}",
                        help="print the toolkit version and exit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("gen-corpus", help="generate a synthetic motif corpus (JSON Lines)")
    p.add_argument("--out", required=True, help="output corpus path (JSONL)")
    p.add_argument("--eval-out", default=None, help="optional second file receiving the last --n-eval sequences")
    p.add_argument("--n-eval", type=int, default=0, help="how many trailing sequences go to --eval-out")
    p.add_argument("--n-sequences", type=int, default=500, help="total sequences to generate")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--music-vocab-size", type=int, default=64, help="size of the music token vocabulary")
    p.add_argument("--noise-vocab", type=_int_list, default=(64, 65, 66, 67),
                   help="comma-separated noise token ids directly above the music vocabulary")
    p.add_argument("--motif-len", type=int, default=8, help="tokens per motif")
    p.add_argument("--motif-count", type=int, default=16, help="motifs in the shared bank")
    p.add_argument("--repeats-per-seq", type=int, default=12, help="motif repeats per sequence")
    p.add_argument("--mutation-rate", type=float, default=0.05, help="per-token mutation probability")
    p.add_argument("--noise-mix-fraction", type=float, default=0.1,
                   help="fraction of sequences with an embedded constant-noise segment")

    p = sub.add_parser("train", help="train the builtin n-gram scorer on a corpus")
    p.add_argument("--corpus", required=True, help="training corpus (JSONL)")
    p.add_argument("--out", required=True, help="output model path (JSON)")
    p.add_argument("--order", type=int, default=4, help="context length in tokens")
    p.add_argument("--alpha", type=float, default=0.1, help="Laplace smoothing constant")

    p = sub.add_parser("perturb", help="apply one perturbation to every sequence in a file")
    p.add_argument("--in", dest="in_path", required=True, help="input sequences (JSONL)")
    p.add_argument("--out", required=True, help="output sequences (JSONL), same ids")
    p.add_argument("--kind", choices=("noise", "shuffle"), default="noise", help="perturbation kind")
    p.add_argument("--start", type=int, default=250, help="window start (0-based token index)")
    p.add_argument("--len", dest="length", type=int, required=True, help="window length in tokens")
    p.add_argument("--seed", type=int, default=0, help="perturbation seed (shared by all sequences)")
    p.add_argument("--noise-mode", choices=("constant", "iid"), default="constant",
                   help="noise token model (noise kind only)")
    p.add_argument("--noise-vocab", type=_int_list, default=(64,),
                   help="comma-separated noise token ids (noise kind only)")
    p.add_argument("--segment-len", type=int, default=1, help="segment length (shuffle kind only)")

    p = sub.add_parser("score", help="score sequences; one trace CSV per sequence")
    p.add_argument("--in", dest="in_path", required=True, help="sequences to score (JSONL)")
    p.add_argument("--out-dir", required=True, help="directory receiving <id>.csv traces")
    p.add_argument("--model", default=None, help="builtin n-gram model path (JSON)")
    # dest must not collide with the subparsers dest ("command")
    p.add_argument("--command", dest="scorer_command", default=None,
                   help="external scorer command line (alternative to --model)")

    p = sub.add_parser("diff", help="token-wise difference of two trace CSVs")
    p.add_argument("--original", required=True, help="original trace CSV (index,nll)")
    p.add_argument("--perturbed", required=True, help="perturbed trace CSV (index,nll)")
    p.add_argument("--out", required=True, help="output diff CSV (index,delta_nll)")
    p.add_argument("--start", type=int, default=1, help="perturbation window start")
    p.add_argument("--len", dest="length", type=int, default=0, help="perturbation window length")

    p = sub.add_parser("regions", help="segment a diff CSV into peak/assimilation/recovery")
    p.add_argument("--diff", required=True, help="diff CSV (index,delta_nll)")
    p.add_argument("--start", type=int, required=True, help="perturbation window start")
    p.add_argument("--len", dest="length", type=int, required=True, help="perturbation window length")
    p.add_argument("--out", required=True, help="output boundaries JSON")
    p.add_argument("--smooth-len", type=int, default=5, help="moving-average width (odd)")
    p.add_argument("--run-len", type=int, default=5, help="consecutive tokens defining a boundary")
    p.add_argument("--zero-tol", type=float, default=1e-6, help="zero-band half-width in nats")

    p = sub.add_parser("sweep", help="run a perturbation-length sweep from a config file")
    p.add_argument("--config", default=None,
                   help=f"sweep config JSON (default: ${CONFIG_ENV_VAR} when set)")
    p.add_argument("--samples", required=True, help="sample sequences (JSONL)")
    p.add_argument("--out", required=True, help="output directory for report files")
    p.add_argument("--model", default=None, help="override: builtin n-gram model path")
    p.add_argument("--command", dest="scorer_command", default=None,
                   help="override: external scorer command line")
    p.add_argument("--workers", type=int, default=None, help="override: parallel scoring workers")
    p.add_argument("--seed", type=int, default=None, help="override: master seed")
    p.add_argument("--formats", type=_str_list, default=None,
                   help="override: comma-separated report formats from csv,json,svg")

    p = sub.add_parser("report", help="re-emit or merge existing report JSON files")
    p.add_argument("--in", dest="in_paths", required=True, nargs="+",
                   help="one report.json re-emits; several merge into one pooled report")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--formats", type=_str_list, default=("svg",),
                   help="comma-separated formats from csv,json,svg")
    return parser


def cmd_gen_corpus(args) -> CommandOutcome:
    cfg = toymodel.CorpusConfig(
        music_vocab_size=args.music_vocab_size,
        noise_vocab=args.noise_vocab,
        motif_len=args.motif_len,
        motif_count=args.motif_count,
        repeats_per_seq=args.repeats_per_seq,
        mutation_rate=args.mutation_rate,
        noise_mix_fraction=args.noise_mix_fraction,
        n_sequences=args.n_sequences,
        seed=args.seed,
    )
    if args.n_eval < 0 or args.n_eval >= cfg.n_sequences:
        raise ValidationError("bad-config", f"--n-eval must be in [0, {cfg.n_sequences}), got {args.n_eval}")
    if (args.eval_out is None) != (args.n_eval == 0):
        raise ValidationError("bad-config", "--eval-out and --n-eval must be given together")
    corpus = toymodel.gen_corpus(cfg)
    split = cfg.n_sequences - args.n_eval
    write_sequences_jsonl(args.out, corpus[:split])
    summary = f"wrote {split} sequences to {args.out}"
    if args.eval_out is not None:
        write_sequences_jsonl(args.eval_out, corpus[split:])
        summary += f" and {args.n_eval} held-out sequences to {args.eval_out}"
    return CommandOutcome(0, summary)


def cmd_train(args) -> CommandOutcome:
    corpus = read_sequences_jsonl(args.corpus)
    model = toymodel.train_ngram(corpus, order=args.order, alpha=args.alpha)
    toymodel.save_model(model, args.out)
    return CommandOutcome(
        0,
        f"trained {model.scorer_id} on {len(corpus)} sequences "
        f"({model.pair_keys.size} distinct transitions) -> {args.out}",
    )


def cmd_perturb(args) -> CommandOutcome:
    spec = PerturbationSpec(
        kind=args.kind,
        start=args.start,
        length=args.length,
        seed=args.seed,
        noise_mode=args.noise_mode,
        noise_vocab=args.noise_vocab,
        segment_len=args.segment_len,
    )
    seqs = read_sequences_jsonl(args.in_path)
    write_sequences_jsonl(args.out, [spec.apply(seq) for seq in seqs])
    return CommandOutcome(0, f"perturbed {len(seqs)} sequences ({args.kind}) -> {args.out}")


def _open_scorer_from_flags(model: str | None, command: str | None):
    if (model is None) == (command is None):
        raise ValidationError("bad-scorer", "give exactly one of --model or --command")
    if model is not None:
        if not Path(model).exists():
            raise FileNotFoundError(model)
        return scoring.open_builtin(model)
    return scoring.open_external(command)


def cmd_score(args) -> CommandOutcome:
    seqs = read_sequences_jsonl(args.in_path)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _open_scorer_from_flags(args.model, args.scorer_command) as scorer:
        for seq in seqs:
            trace = scoring.score_sequence(scorer, seq)
            scoring.write_trace_csv(out_dir / f"{seq.id}.csv", trace)
        name = scorer.name
    return CommandOutcome(0, f"scored {len(seqs)} sequences with {name} -> {out_dir}")


def cmd_diff(args) -> CommandOutcome:
    original = scoring.read_trace_csv(args.original)
    perturbed = scoring.read_trace_csv(args.perturbed)
    window = PerturbWindow(start=args.start, length=args.length)
    diff = analysis.token_diff(original, perturbed, window)
    analysis.write_diff_csv(args.out, diff)
    return CommandOutcome(
        0, f"wrote {len(diff)} token differences (sum {analysis.global_diff(diff):+.6g} nats) -> {args.out}"
    )


def cmd_regions(args) -> CommandOutcome:
    window = PerturbWindow(start=args.start, length=args.length)
    diff = analysis.read_diff_csv(args.diff, window)
    seg = analysis.detect_regions(
        diff, smooth_len=args.smooth_len, run_len=args.run_len, zero_tol=args.zero_tol
    )
    stats = None if seg.peak.empty else analysis.peak_stats(diff, seg)
    analysis.write_regions_json(args.out, seg, stats)
    names = [
        name
        for name, span in (("peak", seg.peak), ("assimilation", seg.assimilation), ("recovery", seg.recovery))
        if not span.empty
    ]
    return CommandOutcome(0, f"detected regions: {', '.join(names) if names else 'none'} -> {args.out}")


def cmd_sweep(args) -> CommandOutcome:
    config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
    if not config_path:
        raise ValidationError(
            "bad-config", f"no --config given and ${CONFIG_ENV_VAR} is not set"
        )
    if not Path(config_path).exists():
        raise FileNotFoundError(config_path)
    doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValidationError("bad-config", f"{config_path}: config must be a JSON object")
    if args.model is not None and args.scorer_command is not None:
        raise ValidationError("bad-scorer", "give at most one of --model and --command")
    if args.model is not None:
        doc["scorer"] = {"kind": "builtin-ngram", "model": args.model}
    if args.scorer_command is not None:
        doc["scorer"] = {"kind": "external", "command": args.scorer_command}
    if args.workers is not None:
        doc["workers"] = args.workers
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.formats is not None:
        doc["formats"] = list(args.formats)
    cfg = harness.ExperimentConfig.from_json_dict(doc)
    samples = read_sequences_jsonl(args.samples)
    report = harness.run_sweep(cfg, samples, base_dir=Path(config_path).parent)
    written = harness.emit_report(report, cfg.formats, args.out)
    agg = report.correlations.get("aggregated", {})
    note = ""
    if agg.get("status") == "ok":
        note = (
            f"; aggregated pearson r={agg['pearson']['statistic']:+.3f}"
            f" (p={agg['pearson']['p_value']:.3g})"
        )
    return CommandOutcome(
        0,
        f"swept {len(report.rows)} rows ({len(report.skipped)} skipped, {len(report.failed)} failed)"
        f"{note}; wrote {', '.join(p.name for p in written)} to {args.out}",
    )


def cmd_report(args) -> CommandOutcome:
    docs = [harness.load_report(p) for p in args.in_paths]
    if len(docs) == 1:
        doc = docs[0]
        action = "re-emitted report"
    else:
        doc = harness.merge_reports(docs)
        action = f"merged {len(docs)} reports"
    written = harness.emit_report(doc, args.formats, args.out)
    return CommandOutcome(0, f"{action}: wrote {', '.join(p.name for p in written)} to {args.out}")


_HANDLERS = {
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "perturb": cmd_perturb,
    "score": cmd_score,
    "diff": cmd_diff,
    "regions": cmd_regions,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def run(argv: list[str] | None = None) -> CommandOutcome:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        outcome = _HANDLERS[args.command](args)
    except ValidationError as exc:
        return CommandOutcome(1, f"error: {exc}")
    except FileNotFoundError as exc:
        return CommandOutcome(1, f"error: file not found: {exc}")
    except json.JSONDecodeError as exc:
        return CommandOutcome(1, f"error: invalid JSON input: {exc}")
    except BackendError as exc:
        return CommandOutcome(2, f"backend error: {exc}")
    except OSError as exc:
        return CommandOutcome(2, f"i/o error: {exc}")
    return outcome


def main(argv: list[str] | None = None) -> int:
    outcome = run(argv)
    stream = sys.stdout if outcome.exit_code == 0 else sys.stderr
    print(outcome.summary, file=stream)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())

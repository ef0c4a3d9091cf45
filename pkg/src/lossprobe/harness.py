"""Experiment orchestration: perturbation-length sweeps over a sample set.

A sweep takes a config (perturbation kind, length grid, injection start,
scorer) and a list of token sequences. For every (sample, length) pair it
scores the original once (cached per sample), builds the perturbed
sequence, scores it, and reduces the pair to a report row: global loss
difference, region segmentation, peak stats. Rows are aggregated per
length (mean/std across samples) and correlated against length in the
two standard modes:

  large-sample  every (sample, length) row is one point
  aggregated    one point per length (the mean row)

Workers only parallelize scoring; rows are sorted by (sample_id, length)
before any aggregation, so worker count and scheduling never change a
single output byte. Every row's perturbation seed derives from
(master_seed, sample_id, length) by a SHA-256 split, so adding samples
or lengths never re-seeds existing rows.

Reports serialize to CSV (raw rows), canonical JSON (full report, stable
key order, no timestamps), and SVG charts.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from queue import SimpleQueue

import numpy as np

from . import __version__
from .analysis import (
    DiffTrace,
    PeakStats,
    RegionSegmentation,
    Span,
    detect_regions,
    global_diff,
    peak_stats,
    token_diff,
)
from .core import PerturbationSpec, TokenSequence, ValidationError, derive_seed
from .scoring import BackendError, ScorerHandle, open_scorer, score_sequence
from .stats import StatResult, linregress, pearson, spearman

CONFIG_VERSION = 1
REPORT_VERSION = 1

DEFAULT_NOISE_LENGTHS = (5, 10, 50, 100, 150, 200)
DEFAULT_SHUFFLE_SEGMENTS = (1, 2, 5, 10, 35, 50, 70, 100, 150, 200)

_FORMATS = ("csv", "json", "svg")

CSV_COLUMNS = [
    "sample_id",
    "length_tokens",
    "delta_nll",
    "peak_height",
    "peak_latency",
    "peak_start",
    "peak_end",
    "assimilation_start",
    "assimilation_end",
    "recovery_start",
    "recovery_end",
    "seed",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: what to perturb, how much, and how to score and analyze.

    For kind "noise" the swept lengths are injection window lengths; for
    kind "shuffle" they are segment lengths permuted inside a fixed
    window of shuffle_window_len tokens at the same start.
    """

    kind: str = "noise"
    lengths: tuple[int, ...] = ()
    start: int = 250
    expected_len: int = 750
    scorer: dict = field(default_factory=dict)
    noise_mode: str = "constant"
    noise_vocab: tuple[int, ...] = (64,)
    shuffle_window_len: int = 200
    master_seed: int = 0
    smooth_len: int = 5
    run_len: int = 5
    zero_tol: float = 1e-6
    alternative: str = "two-sided"
    workers: int = 1
    formats: tuple[str, ...] = ("csv", "json")

    def __post_init__(self):
        if self.kind not in ("noise", "shuffle"):
            raise ValidationError("bad-kind", f"kind must be noise or shuffle, got {self.kind!r}")
        lengths = tuple(int(v) for v in self.lengths)
        if not lengths:
            lengths = DEFAULT_NOISE_LENGTHS if self.kind == "noise" else DEFAULT_SHUFFLE_SEGMENTS
        object.__setattr__(self, "lengths", lengths)
        if any(b <= a for a, b in zip(lengths, lengths[1:])) or lengths[0] < 1:
            raise ValidationError("bad-lengths", f"lengths must be strictly increasing and >= 1: {lengths}")
        if self.start < 1:
            raise ValidationError("window-out-of-bounds", f"start must be >= 1, got {self.start}")
        if self.start + max(lengths) > self.expected_len:
            raise ValidationError(
                "window-out-of-bounds",
                f"start {self.start} + max length {max(lengths)} exceeds expected_len {self.expected_len}",
            )
        if self.kind == "shuffle":
            if self.shuffle_window_len < 1:
                raise ValidationError("bad-config", "shuffle_window_len must be >= 1")
            if self.start + self.shuffle_window_len > self.expected_len:
                raise ValidationError(
                    "window-out-of-bounds",
                    f"start {self.start} + shuffle window {self.shuffle_window_len} exceeds "
                    f"expected_len {self.expected_len}",
                )
        object.__setattr__(self, "noise_vocab", tuple(int(t) for t in self.noise_vocab))
        if self.kind == "noise":
            if self.noise_mode not in ("constant", "iid"):
                raise ValidationError("bad-noise-mode", f"unknown noise mode {self.noise_mode!r}")
            if not self.noise_vocab:
                raise ValidationError("empty-noise-vocab", "noise_vocab must be non-empty")
            if self.noise_mode == "constant" and len(self.noise_vocab) != 1:
                raise ValidationError("bad-noise-vocab", "constant mode takes exactly one noise token")
        if self.smooth_len < 1 or self.smooth_len % 2 == 0:
            raise ValidationError("bad-window-len", f"smooth_len must be odd and >= 1, got {self.smooth_len}")
        if self.run_len < 1:
            raise ValidationError("bad-run-len", f"run_len must be >= 1, got {self.run_len}")
        if not self.zero_tol >= 0:
            raise ValidationError("bad-zero-tol", f"zero_tol must be >= 0, got {self.zero_tol}")
        if self.alternative not in ("two-sided", "greater", "less"):
            raise ValidationError("bad-alternative", f"unknown alternative {self.alternative!r}")
        if self.workers < 1:
            raise ValidationError("bad-config", f"workers must be >= 1, got {self.workers}")
        formats = tuple(self.formats)
        unknown = set(formats) - set(_FORMATS)
        if unknown:
            raise ValidationError("bad-format", f"unknown report formats: {sorted(unknown)}")
        object.__setattr__(self, "formats", formats)
        if not self.scorer:
            raise ValidationError("bad-scorer", "config needs a scorer descriptor")

    def to_json_dict(self) -> dict:
        d = {
            "config_version": CONFIG_VERSION,
            "kind": self.kind,
            "lengths": list(self.lengths),
            "start": self.start,
            "expected_len": self.expected_len,
            "scorer": self.scorer,
            "seed": self.master_seed,
            "analysis": {"smooth_len": self.smooth_len, "run_len": self.run_len, "zero_tol": self.zero_tol},
            "alternative": self.alternative,
            "workers": self.workers,
            "formats": list(self.formats),
        }
        if self.kind == "noise":
            d["noise"] = {"mode": self.noise_mode, "vocab": list(self.noise_vocab)}
        else:
            d["shuffle"] = {"window_len": self.shuffle_window_len}
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExperimentConfig":
        known = {
            "config_version", "kind", "lengths", "start", "expected_len", "scorer",
            "noise", "shuffle", "seed", "analysis", "alternative", "workers", "formats",
        }
        unknown = set(d) - known
        if unknown:
            raise ValidationError("bad-config", f"unknown config fields: {sorted(unknown)}")
        version = d.get("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ValidationError("bad-config", f"unsupported config_version {version!r}")
        noise = d.get("noise", {})
        shuffle = d.get("shuffle", {})
        analysis = d.get("analysis", {})
        kwargs: dict = {
            "kind": d.get("kind", "noise"),
            "lengths": tuple(d.get("lengths", ())),
            "start": int(d.get("start", 250)),
            "expected_len": int(d.get("expected_len", 750)),
            "scorer": dict(d.get("scorer", {})),
            "master_seed": int(d.get("seed", 0)),
            "alternative": d.get("alternative", "two-sided"),
            "workers": int(d.get("workers", 1)),
        }
        if "mode" in noise:
            kwargs["noise_mode"] = noise["mode"]
        if "vocab" in noise:
            kwargs["noise_vocab"] = tuple(noise["vocab"])
        if "window_len" in shuffle:
            kwargs["shuffle_window_len"] = int(shuffle["window_len"])
        for key in ("smooth_len", "run_len", "zero_tol"):
            if key in analysis:
                kwargs[key] = analysis[key]
        if "formats" in d:
            kwargs["formats"] = tuple(d["formats"])
        return cls(**kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError("bad-config", f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("bad-config", f"{path}: config must be a JSON object")
    return ExperimentConfig.from_json_dict(doc)


@dataclass(frozen=True)
class SweepRow:
    sample_id: str
    length: int
    seed: int
    delta_nll: float
    regions: RegionSegmentation
    peak: PeakStats | None

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "length_tokens": self.length,
            "seed": self.seed,
            "delta_nll": self.delta_nll,
            "peak_height": None if self.peak is None else self.peak.height,
            "peak_latency": None if self.peak is None else self.peak.latency,
            "regions": self.regions.to_json_dict(),
        }


@dataclass
class SweepReport:
    config: dict
    scorer: dict
    rows: list[SweepRow]
    skipped: list[dict]
    failed: list[dict]
    aggregates: list[dict]
    correlations: dict
    profile_example: dict | None
    toolkit_version: str = __version__

    def to_json_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "toolkit_version": self.toolkit_version,
            "config": self.config,
            "scorer": self.scorer,
            "rows": [r.to_json_dict() for r in self.rows],
            "skipped": self.skipped,
            "failed": self.failed,
            "aggregates": self.aggregates,
            "correlations": self.correlations,
            "profile_example": self.profile_example,
        }


def _perturbation_for(cfg: ExperimentConfig, sample_id: str, length: int) -> PerturbationSpec:
    seed = derive_seed(cfg.master_seed, sample_id, length)
    if cfg.kind == "noise":
        return PerturbationSpec(
            kind="noise",
            start=cfg.start,
            length=length,
            seed=seed,
            noise_mode=cfg.noise_mode,
            noise_vocab=cfg.noise_vocab,
        )
    return PerturbationSpec(
        kind="shuffle",
        start=cfg.start,
        length=cfg.shuffle_window_len,
        seed=seed,
        segment_len=length,
    )


def _process_sample(
    cfg: ExperimentConfig, scorer: ScorerHandle, seq: TokenSequence
) -> tuple[list[SweepRow], list[dict], dict]:
    rows: list[SweepRow] = []
    failed: list[dict] = []
    diffs: dict[tuple[str, int], DiffTrace] = {}
    try:
        original = score_sequence(scorer, seq)
    except (BackendError, ValidationError) as exc:
        for length in cfg.lengths:
            failed.append({"sample_id": seq.id, "length_tokens": length, "error": str(exc)})
        return rows, failed, diffs
    for length in cfg.lengths:
        spec = _perturbation_for(cfg, seq.id, length)
        try:
            perturbed_seq = spec.apply(seq)
            perturbed = score_sequence(scorer, perturbed_seq)
            diff = token_diff(original, perturbed, spec.window)
            seg = detect_regions(
                diff, smooth_len=cfg.smooth_len, run_len=cfg.run_len, zero_tol=cfg.zero_tol
            )
            stats = None if seg.peak.empty else peak_stats(diff, seg)
            rows.append(
                SweepRow(
                    sample_id=seq.id,
                    length=length,
                    seed=spec.seed,
                    delta_nll=global_diff(diff),
                    regions=seg,
                    peak=stats,
                )
            )
            diffs[(seq.id, length)] = diff
        except (BackendError, ValidationError) as exc:
            failed.append({"sample_id": seq.id, "length_tokens": length, "error": str(exc)})
    return rows, failed, diffs


def run_sweep(
    cfg: ExperimentConfig,
    samples: list[TokenSequence],
    base_dir: str | Path | None = None,
) -> SweepReport:
    """Execute the sweep. Deterministic given config and samples."""
    if not samples:
        raise ValidationError("empty-input", "no samples to sweep")
    handles: list[ScorerHandle] = [open_scorer(cfg.scorer, base_dir=base_dir)]
    try:
        if handles[0].kind == "external":
            for _ in range(cfg.workers - 1):
                handles.append(open_scorer(cfg.scorer, base_dir=base_dir))
        else:
            # builtin scorers are immutable; share one handle across workers
            handles *= cfg.workers
        return _run_sweep_with_handles(cfg, samples, handles)
    finally:
        # builtin sweeps reuse one handle object; close each instance once
        for handle in {id(h): h for h in handles}.values():
            handle.close()


def _run_sweep_with_handles(
    cfg: ExperimentConfig, samples: list[TokenSequence], handles: list[ScorerHandle]
) -> SweepReport:
    vocab = handles[0].vocab_size
    if cfg.kind == "noise" and max(cfg.noise_vocab) >= vocab:
        raise ValidationError(
            "token-out-of-vocab",
            f"noise token {max(cfg.noise_vocab)} outside scorer vocabulary [0, {vocab})",
        )
    skipped: list[dict] = []
    jobs: list[TokenSequence] = []
    for seq in samples:
        if len(seq) < cfg.expected_len:
            reason = f"sequence length {len(seq)} below expected {cfg.expected_len}"
            skipped.extend(
                {"sample_id": seq.id, "length_tokens": L, "reason": reason} for L in cfg.lengths
            )
            continue
        if seq.vocab_size > vocab:
            reason = f"sequence vocab {seq.vocab_size} exceeds scorer vocab {vocab}"
            skipped.extend(
                {"sample_id": seq.id, "length_tokens": L, "reason": reason} for L in cfg.lengths
            )
            continue
        if len(seq) > cfg.expected_len:
            seq = seq.with_tokens(seq.tokens[: cfg.expected_len])
        jobs.append(seq)

    rows: list[SweepRow] = []
    failed: list[dict] = []
    diffs: dict[tuple[str, int], DiffTrace] = {}
    if jobs:
        pool: SimpleQueue = SimpleQueue()
        for h in handles:
            pool.put(h)

        def work(seq: TokenSequence):
            handle = pool.get()
            try:
                return _process_sample(cfg, handle, seq)
            finally:
                pool.put(handle)

        if cfg.workers == 1:
            results = [work(seq) for seq in jobs]
        else:
            with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
                results = list(executor.map(work, jobs))
        for r_rows, r_failed, r_diffs in results:
            rows.extend(r_rows)
            failed.extend(r_failed)
            diffs.update(r_diffs)

    if not rows:
        raise BackendError(
            f"sweep produced no rows: {len(skipped)} skipped, {len(failed)} failed "
            f"out of {len(samples) * len(cfg.lengths)} (sample, length) pairs"
        )
    rows.sort(key=lambda r: (r.sample_id, r.length))
    skipped.sort(key=lambda s: (s["sample_id"], s["length_tokens"]))
    failed.sort(key=lambda f: (f["sample_id"], f["length_tokens"]))

    aggregates = _aggregate(cfg.lengths, rows)
    correlations = {
        "large_sample": _correlation_json(rows, "large-sample", cfg.alternative),
        "aggregated": _correlation_json(rows, "aggregated", cfg.alternative),
    }
    example = _profile_example(rows, diffs)
    return SweepReport(
        config=cfg.to_json_dict(),
        scorer=handles[0].handshake_dict(),
        rows=rows,
        skipped=skipped,
        failed=failed,
        aggregates=aggregates,
        correlations=correlations,
        profile_example=example,
    )


def _aggregate(lengths: tuple[int, ...], rows: list[SweepRow]) -> list[dict]:
    out = []
    for length in lengths:
        values = np.asarray([r.delta_nll for r in rows if r.length == length], dtype=np.float64)
        if values.size == 0:
            continue
        std = float(np.std(values, ddof=1)) if values.size >= 2 else 0.0
        out.append(
            {
                "length_tokens": length,
                "n": int(values.size),
                "mean_delta_nll": float(np.mean(values)),
                "std_delta_nll": std,
            }
        )
    return out


def correlation_block(
    rows: list[SweepRow], mode: str, alternative: str = "two-sided"
) -> dict[str, StatResult]:
    """Length-vs-loss-difference statistics over report rows.

    mode "large-sample" uses every row as a point; "aggregated" reduces to
    the per-length mean first. Raises ValidationError when fewer than
    three points exist or input is constant.
    """
    if mode == "large-sample":
        xs = [float(r.length) for r in rows]
        ys = [r.delta_nll for r in rows]
    elif mode == "aggregated":
        by_length: dict[int, list[float]] = {}
        for r in rows:
            by_length.setdefault(r.length, []).append(r.delta_nll)
        xs = [float(L) for L in sorted(by_length)]
        ys = [float(np.mean(np.asarray(by_length[L], dtype=np.float64))) for L in sorted(by_length)]
    else:
        raise ValidationError("bad-mode", f"mode must be large-sample or aggregated, got {mode!r}")
    slope, intercept, _, ols = linregress(xs, ys, alternative=alternative)
    return {
        "pearson": pearson(xs, ys, alternative=alternative),
        "spearman": spearman(xs, ys, alternative=alternative),
        "ols": ols,
        "ols_intercept": intercept,
    }


def _correlation_json(rows: list[SweepRow], mode: str, alternative: str) -> dict:
    try:
        block = correlation_block(rows, mode, alternative)
    except ValidationError as exc:
        return {"status": "not computable", "reason": str(exc)}
    return {
        "status": "ok",
        "pearson": block["pearson"].to_json_dict(),
        "spearman": block["spearman"].to_json_dict(),
        "ols": block["ols"].to_json_dict(),
        "ols_intercept": block["ols_intercept"],
    }


def _profile_example(rows: list[SweepRow], diffs: dict[tuple[str, int], DiffTrace]) -> dict | None:
    """One representative token-wise profile: first sample, largest length."""
    if not rows or not diffs:
        return None
    first_sample = rows[0].sample_id
    candidates = [r for r in rows if r.sample_id == first_sample and (r.sample_id, r.length) in diffs]
    if not candidates:
        return None
    row = max(candidates, key=lambda r: r.length)
    diff = diffs[(row.sample_id, row.length)]
    return {
        "sample_id": row.sample_id,
        "length_tokens": row.length,
        "window": [diff.injection_window.start, diff.injection_window.end],
        "delta_nll_values": [float(v) for v in diff.values],
        "regions": row.regions.to_json_dict(),
    }


def report_to_canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(path: Path, row_dicts: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for rd in row_dicts:
            regions = rd["regions"]
            w.writerow(
                [
                    rd["sample_id"],
                    rd["length_tokens"],
                    _csv_cell(rd["delta_nll"]),
                    _csv_cell(rd["peak_height"]),
                    _csv_cell(rd["peak_latency"]),
                    regions["peak"][0],
                    regions["peak"][1],
                    regions["assimilation"][0],
                    regions["assimilation"][1],
                    regions["recovery"][0],
                    regions["recovery"][1],
                    rd["seed"],
                ]
            )


def _plot_mean_vs_length(doc: dict, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "lossprobe"
    lengths = [a["length_tokens"] for a in doc["aggregates"]]
    means = [a["mean_delta_nll"] for a in doc["aggregates"]]
    stds = [a["std_delta_nll"] for a in doc["aggregates"]]
    kind = doc["config"].get("kind", "noise")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(lengths, means, yerr=stds, marker="o", capsize=3.0)
    ax.axhline(0.0, linewidth=0.8, color="0.5")
    ax.set_xlabel("segment length (tokens)" if kind == "shuffle" else "perturbation length (tokens)")
    ax.set_ylabel("mean loss difference (nats)")
    ax.set_title(f"{kind} sweep: loss difference vs length")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_profile(doc: dict, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "lossprobe"
    example = doc["profile_example"]
    values = example["delta_nll_values"]
    regions = example["regions"]
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(range(len(values)), values, linewidth=0.9)
    ax.axhline(0.0, linewidth=0.8, color="0.5")
    shade = {"peak": "#d62728", "assimilation": "#1f77b4", "recovery": "#2ca02c"}
    for name, color in shade.items():
        start, end = regions[name]
        if end > start:
            ax.axvspan(start, end, alpha=0.18, color=color, label=name)
    ax.set_xlabel("token index")
    ax.set_ylabel("loss difference (nats)")
    ax.set_title(f"{example['sample_id']} @ length {example['length_tokens']}")
    if any(regions[n][1] > regions[n][0] for n in shade):
        ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(report: SweepReport | dict, formats, out_dir: str | Path) -> list[Path]:
    """Write the report files; errors before creating anything partial."""
    doc = report.to_json_dict() if isinstance(report, SweepReport) else report
    formats = tuple(formats)
    unknown = set(formats) - set(_FORMATS)
    if unknown:
        raise ValidationError("bad-format", f"unknown report formats: {sorted(unknown)}")
    if not formats:
        raise ValidationError("bad-format", "no report formats requested")
    if not doc.get("rows"):
        raise ValidationError("empty-report", "report has no rows; refusing to emit files")
    if "svg" in formats and not doc.get("profile_example"):
        raise ValidationError("empty-report", "report has no profile example; cannot plot regions")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if "csv" in formats:
        p = out / "report.csv"
        write_report_csv(p, doc["rows"])
        written.append(p)
    if "json" in formats:
        p = out / "report.json"
        p.write_text(report_to_canonical_json(doc), encoding="utf-8")
        written.append(p)
    if "svg" in formats:
        p1 = out / "mean_vs_length.svg"
        _plot_mean_vs_length(doc, p1)
        written.append(p1)
        p2 = out / "profile_regions.svg"
        _plot_profile(doc, p2)
        written.append(p2)
    return written


def load_report(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError("bad-report", f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("report_version") != REPORT_VERSION:
        raise ValidationError("bad-report", f"{path}: not a version-{REPORT_VERSION} sweep report")
    return doc


def merge_reports(docs: list[dict], alternative: str | None = None) -> dict:
    """Pool rows of several sweep reports into one cross-sweep report.

    All sources must share the perturbation kind. Rows gain a "source"
    index; aggregates and correlations are recomputed over the pooled
    rows (the large-sample mode is the point of merging: one point per
    (source, sample, length)).
    """
    if not docs:
        raise ValidationError("empty-input", "nothing to merge")
    kinds = {d["config"].get("kind") for d in docs}
    if len(kinds) != 1:
        raise ValidationError("bad-merge", f"cannot merge sweeps of different kinds: {sorted(kinds)}")
    if alternative is None:
        alternative = docs[0]["config"].get("alternative", "two-sided")
    pooled_rows: list[dict] = []
    skipped: list[dict] = []
    failed: list[dict] = []
    for i, d in enumerate(docs):
        for rd in d["rows"]:
            merged_rd = dict(rd)
            merged_rd["source"] = i
            pooled_rows.append(merged_rd)
        skipped.extend(dict(s, source=i) for s in d.get("skipped", []))
        failed.extend(dict(f, source=i) for f in d.get("failed", []))
    pooled_rows.sort(key=lambda r: (r["sample_id"], r["length_tokens"], r["source"]))
    lengths = sorted({r["length_tokens"] for r in pooled_rows})
    stub_rows = [
        SweepRow(
            sample_id=f"{r['source']}:{r['sample_id']}",
            length=r["length_tokens"],
            seed=r["seed"],
            delta_nll=r["delta_nll"],
            regions=RegionSegmentation(
                peak=Span(*r["regions"]["peak"]),
                assimilation=Span(*r["regions"]["assimilation"]),
                recovery=Span(*r["regions"]["recovery"]),
                smooth_len=r["regions"]["smooth_len"],
                run_len=r["regions"]["run_len"],
                zero_tol=r["regions"]["zero_tol"],
            ),
            peak=None
            if r["peak_height"] is None
            else PeakStats(height=r["peak_height"], latency=r["peak_latency"]),
        )
        for r in pooled_rows
    ]
    return {
        "report_version": REPORT_VERSION,
        "toolkit_version": __version__,
        "config": {
            "kind": docs[0]["config"].get("kind"),
            "alternative": alternative,
            "merged_from": [d["config"] for d in docs],
        },
        "scorer": {"merged_from": [d["scorer"] for d in docs]},
        "rows": pooled_rows,
        "skipped": skipped,
        "failed": failed,
        "aggregates": _aggregate(tuple(lengths), stub_rows),
        "correlations": {
            "large_sample": _correlation_json(stub_rows, "large-sample", alternative),
            "aggregated": _correlation_json(stub_rows, "aggregated", alternative),
        },
        "profile_example": docs[0].get("profile_example"),
    }

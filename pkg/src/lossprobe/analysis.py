"""Token-wise loss differencing and the three-region profile detector.

The object of study is the difference trace: per-token NLL of a
perturbed sequence minus the original's, under the same scorer. For a
conforming scorer the prefix before the perturbation window is exactly
zero; inside and after the window the profile falls into up to three
regions:

  Peak          onset spike right at the window start,
  Assimilation  low/negative stretch while the model tracks the
                perturbation instead of the old context,
  Recovery      transient deviation after the window before the
                difference settles back to zero.

Boundaries are found on a smoothed copy of the trace (centered moving
average) by looking for runs of ``run_len`` consecutive values inside or
outside a symmetric ``zero_tol`` band. Peak height/latency are measured
on the RAW trace: smoothing attenuates exactly the spike being measured.

Any region without actual evidence in the trace is returned empty, never
fabricated: an all-zero difference trace yields three empty regions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PerturbWindow, ValidationError
from .scoring import LossTrace


@dataclass(frozen=True, eq=False)
class DiffTrace:
    """Per-token loss difference (perturbed minus original), in nats."""

    values: np.ndarray
    injection_window: PerturbWindow
    original_id: str
    perturbed_id: str
    scorer_id: str

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError("bad-shape", f"diff must be 1-D, got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValidationError("non-finite-diff", "difference trace contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class Span:
    """Half-open token range [start, end); start == end means empty."""

    start: int
    end: int

    def __post_init__(self):
        if self.end < self.start:
            raise ValidationError("bad-span", f"span end {self.end} before start {self.start}")

    def __len__(self) -> int:
        return self.end - self.start

    @property
    def empty(self) -> bool:
        return self.end == self.start


@dataclass(frozen=True)
class RegionSegmentation:
    peak: Span
    assimilation: Span
    recovery: Span
    smooth_len: int
    run_len: int
    zero_tol: float

    def to_json_dict(self) -> dict:
        return {
            "peak": [self.peak.start, self.peak.end],
            "assimilation": [self.assimilation.start, self.assimilation.end],
            "recovery": [self.recovery.start, self.recovery.end],
            "smooth_len": self.smooth_len,
            "run_len": self.run_len,
            "zero_tol": self.zero_tol,
        }


@dataclass(frozen=True)
class PeakStats:
    height: float   # max raw diff over the peak range
    latency: int    # argmax offset from the injection start, first max on ties


def token_diff(original: LossTrace, perturbed: LossTrace, window: PerturbWindow) -> DiffTrace:
    if original.scorer_id != perturbed.scorer_id:
        raise ValidationError(
            "scorer-mismatch",
            f"traces come from different scorers: {original.scorer_id!r} vs {perturbed.scorer_id!r}",
        )
    if len(original) != len(perturbed):
        raise ValidationError(
            "length-mismatch", f"trace lengths differ: {len(original)} vs {len(perturbed)}"
        )
    window.validate_for(len(original))
    return DiffTrace(
        values=perturbed.values - original.values,
        injection_window=window,
        original_id=original.sequence_id,
        perturbed_id=perturbed.sequence_id,
        scorer_id=original.scorer_id,
    )


def global_diff(diff: DiffTrace) -> float:
    """Whole-sequence loss difference: the sum of token-wise differences."""
    return float(np.sum(diff.values))


def moving_average(values, window_len: int = 5) -> np.ndarray:
    """Centered mean; the window truncates at the edges (no padding)."""
    if window_len < 1 or window_len % 2 == 0:
        raise ValidationError("bad-window-len", f"window_len must be odd and >= 1, got {window_len}")
    arr = np.asarray(values, dtype=np.float64)
    if window_len == 1 or arr.size == 0:
        return arr.copy()
    half = window_len // 2
    csum = np.concatenate([[0.0], np.cumsum(arr)])
    idx = np.arange(arr.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, arr.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def _first_run(mask: np.ndarray, start: int, run_len: int) -> int | None:
    """First index >= start where ``mask`` holds for run_len consecutive entries."""
    m = mask[start:]
    if m.size < run_len:
        return None
    csum = np.cumsum(m.astype(np.int64))
    window_sums = csum[run_len - 1 :].copy()
    window_sums[1:] -= csum[: m.size - run_len]
    hits = np.flatnonzero(window_sums == run_len)
    return start + int(hits[0]) if hits.size else None


def detect_regions(
    diff: DiffTrace,
    window: PerturbWindow | None = None,
    smooth_len: int = 5,
    run_len: int = 5,
    zero_tol: float = 1e-6,
) -> RegionSegmentation:
    """Segment the smoothed diff into Peak / Assimilation / Recovery.

    Peak starts at the window start and ends at the first run of run_len
    smoothed values <= zero_tol (capped at the window end). Assimilation
    runs from the peak end until the values rise above +zero_tol for
    run_len tokens, at latest to the window end; it is only reported when
    something actually dips below -zero_tol in that range. Recovery runs
    from the window end until the first run of run_len values inside the
    +/-zero_tol band, else to the sequence end.
    """
    if window is None:
        window = diff.injection_window
    if run_len < 1:
        raise ValidationError("bad-run-len", f"run_len must be >= 1, got {run_len}")
    if not zero_tol >= 0:
        raise ValidationError("bad-zero-tol", f"zero_tol must be >= 0, got {zero_tol}")
    n = len(diff)
    window.validate_for(n)
    smoothed = moving_average(diff.values, smooth_len)
    ws, we = window.start, window.end

    run = _first_run(smoothed <= zero_tol, ws, run_len)
    peak_end = we if run is None else min(run, we)
    peak = Span(ws, peak_end)

    run = _first_run(smoothed > zero_tol, peak_end, run_len)
    assim_end = we if run is None else min(run, we)
    if np.any(smoothed[peak_end:assim_end] < -zero_tol):
        assimilation = Span(peak_end, assim_end)
    else:
        assimilation = Span(peak_end, peak_end)

    run = _first_run(np.abs(smoothed) <= zero_tol, we, run_len)
    recovery = Span(we, n if run is None else run)

    return RegionSegmentation(
        peak=peak,
        assimilation=assimilation,
        recovery=recovery,
        smooth_len=smooth_len,
        run_len=run_len,
        zero_tol=zero_tol,
    )


def peak_stats(diff: DiffTrace, seg: RegionSegmentation) -> PeakStats:
    if seg.peak.empty:
        raise ValidationError("empty-peak", "no peak region detected; peak stats undefined")
    raw = diff.values[seg.peak.start : seg.peak.end]
    latency = int(np.argmax(raw))
    return PeakStats(height=float(raw[latency]), latency=latency)


def write_diff_csv(path: str | Path, diff: DiffTrace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "delta_nll"])
        for i, v in enumerate(diff.values):
            w.writerow([i, repr(float(v))])


def read_diff_csv(path: str | Path, window: PerturbWindow,
                  original_id: str = "", perturbed_id: str = "",
                  scorer_id: str = "csv") -> DiffTrace:
    values = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or [h.strip() for h in header[:2]] != ["index", "delta_nll"]:
            raise ValidationError("bad-csv", f"{path}: expected header 'index,delta_nll'")
        for row in r:
            if not row:
                continue
            values.append(float(row[1]))
    stem = Path(path).stem
    return DiffTrace(
        values=np.asarray(values, dtype=np.float64),
        injection_window=window,
        original_id=original_id or stem,
        perturbed_id=perturbed_id or stem,
        scorer_id=scorer_id,
    )


def write_regions_json(path: str | Path, seg: RegionSegmentation,
                       stats: PeakStats | None = None) -> None:
    doc = seg.to_json_dict()
    doc["peak_height"] = None if stats is None else stats.height
    doc["peak_latency"] = None if stats is None else stats.latency
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")

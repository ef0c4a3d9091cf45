"""Hot numeric kernels: numba fast path with a pure-numpy fallback.

Two operations are hot enough to justify compiled kernels: per-token
n-gram scoring (one packed-key lookup per token) and the exact Spearman
permutation count (n! dot products for n <= 10). Everything else in the
package is plain numpy.

Backend selection happens once at import time: numba is used when it is
importable unless LOSSPROBE_NO_NUMBA is set to 1/true/yes, in which case
the numpy fallback is selected. ``backend_name()`` reports the active
path. Both paths compute identical results and are compared directly by
the test suite and by benchmarks/bench_kernels.py.
"""

from __future__ import annotations

import itertools
import math
import os

import numpy as np

_DISABLED = os.environ.get("LOSSPROBE_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

if not _DISABLED:
    try:
        from numba import njit
    except ImportError:
        _DISABLED = True


def backend_name() -> str:
    return "numpy" if _DISABLED else "numba"


def ngram_score_numpy(
    padded: np.ndarray,
    order: int,
    base: int,
    vocab_size: int,
    alpha: float,
    pair_keys: np.ndarray,
    pair_counts: np.ndarray,
    ctx_keys: np.ndarray,
    ctx_totals: np.ndarray,
) -> np.ndarray:
    """Per-token NLL of padded[order:] under a packed-key count table.

    ``padded`` is the token sequence with ``order`` begin-of-sequence ids
    prepended. Context keys are Horner-packed base-``base`` integers over
    the preceding ``order`` tokens; pair key = ctx_key * vocab_size + token.
    Seen context: NLL = ln(total + alpha*V) - ln(count + alpha). Unseen
    context: exactly ln(V).
    """
    n_tok = padded.shape[0] - order
    out = np.empty(n_tok, dtype=np.float64)
    if n_tok == 0:
        return out
    ctx = np.zeros(n_tok, dtype=np.int64)
    for i in range(order):
        ctx = ctx * base + padded[i : i + n_tok]
    nxt = padded[order : order + n_tok]
    log_v = math.log(vocab_size)
    if ctx_keys.shape[0] == 0:
        out[:] = log_v
        return out
    ci = np.searchsorted(ctx_keys, ctx)
    ci_c = np.minimum(ci, ctx_keys.shape[0] - 1)
    seen = ctx_keys[ci_c] == ctx
    totals = np.where(seen, ctx_totals[ci_c], 0)
    counts = np.zeros(n_tok, dtype=np.int64)
    if pair_keys.shape[0]:
        pk = ctx * vocab_size + nxt
        pi = np.searchsorted(pair_keys, pk)
        pi_c = np.minimum(pi, pair_keys.shape[0] - 1)
        hit = pair_keys[pi_c] == pk
        counts = np.where(hit, pair_counts[pi_c], 0)
    av = alpha * vocab_size
    out[:] = np.where(seen, np.log(totals + av) - np.log(counts + alpha), log_v)
    return out


def perm_count_numpy(rx: np.ndarray, ry: np.ndarray, center: float, bound: float, mode: int) -> int:
    """Count permutations pi of ry whose dot with rx clears the bound.

    mode 0: |dot - center| >= bound (two-sided)
    mode 1: dot - center >= bound   (greater)
    mode 2: dot - center <= bound   (less)
    """
    n = rx.shape[0]
    if n > 12:
        raise ValueError(f"permutation enumeration capped at n=12, got {n}")
    total = 0
    it = itertools.permutations(ry.tolist())
    while True:
        block = list(itertools.islice(it, 131072))
        if not block:
            break
        dots = np.asarray(block, dtype=np.float64) @ rx - center
        if mode == 0:
            total += int(np.count_nonzero(np.abs(dots) >= bound))
        elif mode == 1:
            total += int(np.count_nonzero(dots >= bound))
        else:
            total += int(np.count_nonzero(dots <= bound))
    return total


if not _DISABLED:

    @njit(cache=True)
    def _ngram_score_jit(padded, order, base, vocab_size, alpha, pair_keys, pair_counts, ctx_keys, ctx_totals):  # pragma: no cover - exercised via wrapper
        n_tok = padded.shape[0] - order
        out = np.empty(n_tok, dtype=np.float64)
        top = np.int64(1)
        for _ in range(order - 1):
            top *= base
        ctx = np.int64(0)
        for i in range(order):
            ctx = ctx * base + padded[i]
        log_v = math.log(float(vocab_size))
        n_ctx = ctx_keys.shape[0]
        n_pair = pair_keys.shape[0]
        av = alpha * vocab_size
        for t in range(n_tok):
            nxt = padded[order + t]
            lo = 0
            hi = n_ctx
            while lo < hi:
                mid = (lo + hi) >> 1
                if ctx_keys[mid] < ctx:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < n_ctx and ctx_keys[lo] == ctx:
                pk = ctx * vocab_size + nxt
                plo = 0
                phi = n_pair
                while plo < phi:
                    mid = (plo + phi) >> 1
                    if pair_keys[mid] < pk:
                        plo = mid + 1
                    else:
                        phi = mid
                cnt = np.int64(0)
                if plo < n_pair and pair_keys[plo] == pk:
                    cnt = pair_counts[plo]
                out[t] = math.log(ctx_totals[lo] + av) - math.log(cnt + alpha)
            else:
                out[t] = log_v
            ctx = (ctx % top) * base + nxt
        return out

    @njit(cache=True)
    def _perm_count_jit(rx, ry, center, bound, mode):  # pragma: no cover - exercised via wrapper
        n = rx.shape[0]
        y = ry.copy()
        dot = 0.0
        for i in range(n):
            dot += rx[i] * y[i]
        count = 0
        # Heap's algorithm, dot maintained incrementally across swaps
        s = dot - center
        if mode == 0:
            if abs(s) >= bound:
                count += 1
        elif mode == 1:
            if s >= bound:
                count += 1
        else:
            if s <= bound:
                count += 1
        counters = np.zeros(n, dtype=np.int64)
        i = 0
        while i < n:
            if counters[i] < i:
                if i % 2 == 0:
                    j = 0
                else:
                    j = counters[i]
                dot += (rx[i] - rx[j]) * (y[j] - y[i])
                tmp = y[j]
                y[j] = y[i]
                y[i] = tmp
                s = dot - center
                if mode == 0:
                    if abs(s) >= bound:
                        count += 1
                elif mode == 1:
                    if s >= bound:
                        count += 1
                else:
                    if s <= bound:
                        count += 1
                counters[i] += 1
                i = 0
            else:
                counters[i] = 0
                i += 1
        return count

    def ngram_score(padded, order, base, vocab_size, alpha, pair_keys, pair_counts, ctx_keys, ctx_totals):
        return _ngram_score_jit(
            padded, order, base, vocab_size, alpha, pair_keys, pair_counts, ctx_keys, ctx_totals
        )

    def perm_count(rx, ry, center, bound, mode):
        n = rx.shape[0]
        if n > 12:
            raise ValueError(f"permutation enumeration capped at n=12, got {n}")
        return int(_perm_count_jit(rx, ry, center, bound, mode))

else:
    ngram_score = ngram_score_numpy
    perm_count = perm_count_numpy

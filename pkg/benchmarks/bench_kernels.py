#!/usr/bin/env python3
"""Benchmark the jit-compiled hot kernels against their numpy fallbacks.

Both code paths ship in lossprobe._kernels: the active one is selected at
import (numba unless LOSSPROBE_NO_NUMBA=1), the numpy versions stay
importable for exactly this comparison. The first jit call compiles, so
each workload warms up before timing.
"""

import argparse
import math
import time

import numpy as np

from lossprobe._kernels import (
    backend_name,
    ngram_score,
    ngram_score_numpy,
    perm_count,
    perm_count_numpy,
)
from lossprobe.toymodel import demo_corpus_config, gen_corpus, train_ngram


def bench_ngram_scoring(n_seqs: int, repeats: int) -> None:
    cfg = demo_corpus_config()
    corpus = gen_corpus(cfg)
    model = train_ngram(corpus[:500], order=4, alpha=0.1)
    seqs = corpus[500 : 500 + n_seqs]
    padded = [
        np.concatenate([np.full(model.order, model.bos_id, dtype=np.int64), s.tokens])
        for s in seqs
    ]
    args = (model.order, model.base, model.vocab_size, model.alpha,
            model.pair_keys, model.pair_counts, model.ctx_keys, model.ctx_totals)
    n_tokens = sum(len(s.tokens) for s in seqs) * repeats
    print(f"\n=== n-gram scoring ({n_seqs} sequences x {repeats} repeats, "
          f"{n_tokens:,} token scores) ===")

    ngram_score(padded[0], *args)  # warmup / compile

    start = time.perf_counter()
    for _ in range(repeats):
        active = [ngram_score(p, *args) for p in padded]
    active_time = time.perf_counter() - start

    start = time.perf_counter()
    for _ in range(repeats):
        fallback = [ngram_score_numpy(p, *args) for p in padded]
    fallback_time = time.perf_counter() - start

    for a, b in zip(active, fallback):
        assert np.allclose(a, b, rtol=1e-13)

    print(f"{backend_name():>6} path: {active_time:.3f}s "
          f"({n_tokens / active_time / 1e6:.2f} M tokens/s)")
    print(f" numpy path: {fallback_time:.3f}s "
          f"({n_tokens / fallback_time / 1e6:.2f} M tokens/s)")
    print(f"    speedup: {fallback_time / active_time:.1f}x")


def bench_perm_counting(n: int) -> None:
    total = math.factorial(n)
    print(f"\n=== exact permutation counting (n={n}, {total:,} permutations) ===")
    rng = np.random.default_rng(0)
    rx = rng.permutation(n).astype(np.float64) + 1.0
    ry = rng.permutation(n).astype(np.float64) + 1.0
    center = n * rx.mean() * ry.mean()
    # tail bound for the observed rank correlation, as spearman() sets it up
    denom = float(np.sqrt(((rx - rx.mean()) ** 2).sum() * ((ry - ry.mean()) ** 2).sum()))
    obs = (float(rx @ ry) - center) / denom
    bound = (abs(obs) - 1e-12) * denom

    perm_count(rx, ry, center, bound, 2)  # warmup / compile

    start = time.perf_counter()
    active = perm_count(rx, ry, center, bound, 2)
    active_time = time.perf_counter() - start

    start = time.perf_counter()
    fallback = perm_count_numpy(rx, ry, center, bound, 2)
    fallback_time = time.perf_counter() - start

    assert active == fallback

    print(f"{backend_name():>6} path: {active_time:.3f}s "
          f"({total / active_time / 1e6:.2f} M perms/s, count {active})")
    print(f" numpy path: {fallback_time:.3f}s "
          f"({total / fallback_time / 1e6:.2f} M perms/s)")
    print(f"    speedup: {fallback_time / active_time:.1f}x")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seqs", type=int, default=50, help="sequences per scoring pass")
    parser.add_argument("--repeats", type=int, default=20, help="scoring passes to time")
    parser.add_argument("--perm-n", type=int, default=10, help="permutation problem size (<= 13)")
    args = parser.parse_args()

    print(f"active kernel backend: {backend_name()}")
    if backend_name() != "numba":
        print("note: numba is disabled or unavailable; both columns run the numpy path")
    bench_ngram_scoring(args.seqs, args.repeats)
    bench_perm_counting(args.perm_n)


if __name__ == "__main__":
    main()

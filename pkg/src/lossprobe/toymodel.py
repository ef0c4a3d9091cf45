"""Synthetic motif corpus and a Laplace-smoothed fixed-order n-gram scorer.

The corpus generator produces "music-like" sequences: short motifs drawn
from a shared bank, repeated with point mutations, with an optional
contiguous constant-noise segment embedded in a fraction of sequences.
Trained on such a corpus, the n-gram model assigns low loss to runs of a
repeated noise token (they are maximally regular) and moderate loss to
mutated motif music, which is exactly the asymmetry the perturbation
experiments need: long noise injections score cheaper than the music
they replace.

Model: fixed order k, Laplace smoothing, no backoff.

    p(v | c) = (count(c, v) + alpha) / (count(c, .) + alpha * V)

Contexts are left-padded with a reserved begin-of-sequence id (= V) so
every position has a full k-token context. A context never seen in
training predicts the uniform distribution 1/V exactly.

Counts are stored as two sorted int64 arrays of packed keys: a context
key is the Horner packing of its k tokens in base V+1 (the +1 admits the
begin-of-sequence id), and a pair key is context_key * V + next_token.
Lookups are binary searches; see ``_kernels`` for the scoring loops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .core import TokenSequence, ValidationError
from .scoring import LossTrace

MODEL_FORMAT = "lossprobe-ngram"
MODEL_VERSION = 1

# packed pair keys must stay exact in a 64-bit float consumer
_PORTABLE_KEY_LIMIT = 2**53
_INT64_KEY_LIMIT = 2**62

DEFAULT_FRAME_RATE_HZ = 50.0

# shipped demo recipe: 750-token sequences (94 repeats x 8 tokens, truncated
# by the sweep), 500 training + 50 held-out, fixed seed
DEMO_SEED = 20260816
DEMO_N_EVAL = 50
DEMO_ORDER = 4
DEMO_ALPHA = 0.1


@dataclass(frozen=True)
class CorpusConfig:
    """Generator knobs. Defaults give a small, fast, clearly-structured corpus."""

    music_vocab_size: int = 64
    noise_vocab: tuple[int, ...] = (64, 65, 66, 67)
    motif_len: int = 8
    motif_count: int = 16
    repeats_per_seq: int = 12
    mutation_rate: float = 0.05
    noise_mix_fraction: float = 0.1
    n_sequences: int = 500
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "noise_vocab", tuple(int(t) for t in self.noise_vocab))
        if self.music_vocab_size < 2:
            raise ValidationError("bad-config", f"music_vocab_size must be >= 2, got {self.music_vocab_size}")
        if not self.noise_vocab:
            raise ValidationError("bad-config", "noise_vocab must be non-empty")
        expected = tuple(range(self.music_vocab_size, self.music_vocab_size + len(self.noise_vocab)))
        if tuple(sorted(self.noise_vocab)) != expected:
            raise ValidationError(
                "bad-config",
                f"noise_vocab must be exactly the ids {list(expected)} directly above the music vocabulary",
            )
        for name in ("motif_len", "motif_count", "repeats_per_seq", "n_sequences"):
            if getattr(self, name) < 1:
                raise ValidationError("bad-config", f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("mutation_rate", "noise_mix_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError("bad-config", f"{name} must be in [0, 1], got {v}")

    @property
    def vocab_size(self) -> int:
        return self.music_vocab_size + len(self.noise_vocab)

    def to_json_dict(self) -> dict:
        return {
            "music_vocab_size": self.music_vocab_size,
            "noise_vocab": list(self.noise_vocab),
            "motif_len": self.motif_len,
            "motif_count": self.motif_count,
            "repeats_per_seq": self.repeats_per_seq,
            "mutation_rate": self.mutation_rate,
            "noise_mix_fraction": self.noise_mix_fraction,
            "n_sequences": self.n_sequences,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CorpusConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError("bad-config", f"unknown corpus config fields: {sorted(unknown)}")
        kwargs = dict(d)
        if "noise_vocab" in kwargs:
            kwargs["noise_vocab"] = tuple(kwargs["noise_vocab"])
        return cls(**kwargs)


def demo_corpus_config() -> CorpusConfig:
    """The corpus recipe behind the shipped sweep config and its acceptance run."""
    return CorpusConfig(repeats_per_seq=94, n_sequences=500 + DEMO_N_EVAL, seed=DEMO_SEED)


def gen_corpus(cfg: CorpusConfig) -> list[TokenSequence]:
    """Deterministic corpus from the config seed.

    Per sequence: repeats_per_seq motifs sampled from a bank of
    motif_count motifs (bank shared by the whole corpus), each repeat
    point-mutated at mutation_rate; then, with probability
    noise_mix_fraction, a contiguous run of one noise token (random id,
    random length in [2*motif_len, 4*motif_len], clipped to the sequence)
    overwrites a random position.
    """
    rng = np.random.default_rng(cfg.seed)
    bank = rng.integers(0, cfg.music_vocab_size, size=(cfg.motif_count, cfg.motif_len), dtype=np.int64)
    seq_len = cfg.motif_len * cfg.repeats_per_seq
    noise_ids = np.asarray(cfg.noise_vocab, dtype=np.int64)
    out = []
    for i in range(cfg.n_sequences):
        picks = rng.integers(0, cfg.motif_count, size=cfg.repeats_per_seq)
        tokens = bank[picks].reshape(-1).copy()
        mask = rng.random(seq_len) < cfg.mutation_rate
        n_mut = int(mask.sum())
        if n_mut:
            tokens[mask] = rng.integers(0, cfg.music_vocab_size, size=n_mut, dtype=np.int64)
        if rng.random() < cfg.noise_mix_fraction:
            noise_tok = noise_ids[rng.integers(0, noise_ids.size)]
            seg_len = min(int(rng.integers(2 * cfg.motif_len, 4 * cfg.motif_len + 1)), seq_len)
            pos = int(rng.integers(0, seq_len - seg_len + 1))
            tokens[pos : pos + seg_len] = noise_tok
        out.append(
            TokenSequence(
                id=f"toy-{i:04d}",
                tokens=tokens,
                vocab_size=cfg.vocab_size,
                frame_rate_hz=DEFAULT_FRAME_RATE_HZ,
            )
        )
    return out


@dataclass(frozen=True, eq=False)
class NGramModel:
    """Immutable count table for a fixed-order Laplace n-gram."""

    order: int
    vocab_size: int
    alpha: float
    pair_keys: np.ndarray    # sorted packed (context, next) keys
    pair_counts: np.ndarray
    ctx_keys: np.ndarray     # sorted packed context keys
    ctx_totals: np.ndarray   # total count per context

    def __post_init__(self):
        for name in ("pair_keys", "pair_counts", "ctx_keys", "ctx_totals"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def bos_id(self) -> int:
        return self.vocab_size

    @property
    def base(self) -> int:
        return self.vocab_size + 1

    @property
    def scorer_id(self) -> str:
        return f"ngram(order={self.order},vocab={self.vocab_size},alpha={self.alpha:g})"


def _check_packing(order: int, vocab_size: int) -> None:
    base = vocab_size + 1
    span = base**order * vocab_size
    if span >= _INT64_KEY_LIMIT:
        raise ValidationError(
            "model-too-large",
            f"(vocab_size+1)**order * vocab_size = {span} overflows the packed int64 key space",
        )


def _pack_sequence(tokens: np.ndarray, order: int, vocab_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Packed (context key, pair key) arrays for every position of one sequence."""
    base = vocab_size + 1
    bos = vocab_size
    padded = np.concatenate([np.full(order, bos, dtype=np.int64), tokens])
    n_tok = tokens.size
    ctx = np.zeros(n_tok, dtype=np.int64)
    for i in range(order):
        ctx = ctx * base + padded[i : i + n_tok]
    return ctx, ctx * vocab_size + padded[order : order + n_tok]


def train_ngram(corpus: list[TokenSequence], order: int = 4, alpha: float = 0.1) -> NGramModel:
    """Tally all length-(order+1) windows over the corpus (BOS-padded)."""
    if not corpus:
        raise ValidationError("empty-corpus", "cannot train on an empty corpus")
    if order < 1:
        raise ValidationError("bad-order", f"order must be >= 1, got {order}")
    if not alpha > 0:
        raise ValidationError("bad-alpha", f"alpha must be > 0, got {alpha}")
    vocab_size = corpus[0].vocab_size
    for seq in corpus:
        if seq.vocab_size != vocab_size:
            raise ValidationError(
                "vocab-mismatch",
                f"corpus mixes vocab sizes {vocab_size} and {seq.vocab_size} (sequence {seq.id!r})",
            )
    _check_packing(order, vocab_size)
    all_pairs = np.concatenate([_pack_sequence(seq.tokens, order, vocab_size)[1] for seq in corpus])
    pair_keys, pair_counts = np.unique(all_pairs, return_counts=True)
    pair_counts = pair_counts.astype(np.int64)
    ctx_of_pair = pair_keys // vocab_size
    ctx_keys, first_idx = np.unique(ctx_of_pair, return_index=True)
    ctx_totals = np.add.reduceat(pair_counts, first_idx)
    return NGramModel(
        order=order,
        vocab_size=vocab_size,
        alpha=float(alpha),
        pair_keys=pair_keys,
        pair_counts=pair_counts,
        ctx_keys=ctx_keys,
        ctx_totals=ctx_totals,
    )


def score_ngram(model: NGramModel, seq: TokenSequence) -> LossTrace:
    """Per-token NLL trace of ``seq`` under the model. Length equals T."""
    if seq.vocab_size > model.vocab_size:
        raise ValidationError(
            "vocab-mismatch",
            f"sequence vocab {seq.vocab_size} exceeds model vocab {model.vocab_size}",
        )
    padded = np.concatenate([np.full(model.order, model.bos_id, dtype=np.int64), seq.tokens])
    values = _kernels.ngram_score(
        padded,
        model.order,
        model.base,
        model.vocab_size,
        model.alpha,
        model.pair_keys,
        model.pair_counts,
        model.ctx_keys,
        model.ctx_totals,
    )
    return LossTrace(values=values, sequence_id=seq.id, scorer_id=model.scorer_id)


def context_distribution(model: NGramModel, context_tokens) -> np.ndarray:
    """Full predictive distribution p(. | context); sums to 1 within 1e-9.

    ``context_tokens`` is the last ``order`` tokens (ids may include the
    begin-of-sequence id); shorter contexts are BOS-padded on the left.
    """
    ctx_arr = np.asarray(context_tokens, dtype=np.int64)
    if ctx_arr.size > model.order:
        ctx_arr = ctx_arr[-model.order :]
    if np.any(ctx_arr < 0) or np.any(ctx_arr > model.bos_id):
        raise ValidationError("token-out-of-vocab", "context tokens must be in [0, vocab_size]")
    padded = np.concatenate([np.full(model.order - ctx_arr.size, model.bos_id, dtype=np.int64), ctx_arr])
    key = 0
    for t in padded:
        key = key * model.base + int(t)
    i = int(np.searchsorted(model.ctx_keys, key))
    v = model.vocab_size
    counts = np.zeros(v, dtype=np.int64)
    total = 0
    if i < model.ctx_keys.size and model.ctx_keys[i] == key:
        total = int(model.ctx_totals[i])
        lo = int(np.searchsorted(model.pair_keys, key * v))
        hi = int(np.searchsorted(model.pair_keys, key * v + v))
        toks = model.pair_keys[lo:hi] - key * v
        counts[toks] = model.pair_counts[lo:hi]
    return (counts + model.alpha) / (total + model.alpha * v)


def save_model(model: NGramModel, path: str | Path) -> None:
    """Versioned JSON container; keys stay below 2**53 so any 64-bit-float
    JSON reader (including the bundled adapter) parses them exactly."""
    max_key = int(model.pair_keys[-1]) if model.pair_keys.size else 0
    if max_key >= _PORTABLE_KEY_LIMIT:
        raise ValidationError(
            "model-not-portable",
            f"largest packed key {max_key} exceeds 2**53; such a model cannot be serialized portably",
        )
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "order": model.order,
        "vocab_size": model.vocab_size,
        "alpha": model.alpha,
        "bos_id": model.bos_id,
        "base": model.base,
        "pair_keys": [int(k) for k in model.pair_keys],
        "pair_counts": [int(c) for c in model.pair_counts],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> NGramModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError("bad-model-file", f"{path}: not valid JSON: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise ValidationError("bad-model-file", f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ValidationError(
            "bad-model-file", f"{path}: unsupported version {doc.get('version')!r}"
        )
    order = int(doc["order"])
    vocab_size = int(doc["vocab_size"])
    _check_packing(order, vocab_size)
    pair_keys = np.asarray(doc["pair_keys"], dtype=np.int64)
    pair_counts = np.asarray(doc["pair_counts"], dtype=np.int64)
    if pair_keys.size != pair_counts.size:
        raise ValidationError("bad-model-file", f"{path}: key/count arrays differ in length")
    if pair_keys.size and np.any(np.diff(pair_keys) <= 0):
        raise ValidationError("bad-model-file", f"{path}: pair_keys must be strictly increasing")
    if np.any(pair_counts < 1):
        raise ValidationError("bad-model-file", f"{path}: counts must be >= 1")
    ctx_of_pair = pair_keys // vocab_size
    ctx_keys, first_idx = np.unique(ctx_of_pair, return_index=True)
    ctx_totals = np.add.reduceat(pair_counts, first_idx) if pair_keys.size else np.zeros(0, np.int64)
    return NGramModel(
        order=order,
        vocab_size=vocab_size,
        alpha=float(doc["alpha"]),
        pair_keys=pair_keys,
        pair_counts=pair_counts,
        ctx_keys=ctx_keys,
        ctx_totals=ctx_totals,
    )

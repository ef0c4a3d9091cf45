"""Token-domain sequence types and perturbation operators.

A sequence is an ordered list of non-negative token ids below a fixed
vocabulary size.  Perturbations either overwrite a window with supplied
noise tokens or permute fixed-size segments inside the window.  All
operations are pure: inputs are never modified, outputs are new values.

Randomness policy: every stochastic operation takes an explicit 64-bit
seed and draws from ``numpy.random.default_rng(seed)`` (PCG64).  Derived
seeds for sub-tasks come from :func:`derive_seed`, which hashes the parent
seed together with string/int labels through SHA-256, so adding work items
never shifts the streams of existing ones.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class ValidationError(ValueError):
    """Invalid input to a toolkit operation.

    ``code`` is a stable machine-readable tag (e.g. ``"window-out-of-bounds"``,
    ``"length-mismatch"``, ``"token-out-of-vocab"``) so callers can tell the
    failure modes apart without parsing messages.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _as_token_array(tokens) -> np.ndarray:
    arr = np.asarray(tokens, dtype=np.int64)
    if arr.ndim != 1:
        raise ValidationError("bad-shape", f"token array must be 1-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """An id-labelled token sequence with its vocabulary size.

    ``frame_rate_hz`` is optional metadata: how many tokens represent one
    second of signal, used only when converting window sizes to seconds.
    """

    id: str
    tokens: np.ndarray
    vocab_size: int
    frame_rate_hz: float | None = None

    def __post_init__(self):
        arr = _as_token_array(self.tokens)
        if arr.size < 1:
            raise ValidationError("empty-sequence", f"sequence {self.id!r} has no tokens")
        if self.vocab_size < 1:
            raise ValidationError("bad-vocab", f"vocab_size must be >= 1, got {self.vocab_size}")
        if arr.min() < 0 or arr.max() >= self.vocab_size:
            bad = int(arr[(arr < 0) | (arr >= self.vocab_size)][0])
            raise ValidationError(
                "token-out-of-vocab",
                f"sequence {self.id!r} contains token {bad} outside [0, {self.vocab_size})",
            )
        if self.frame_rate_hz is not None and not self.frame_rate_hz > 0:
            raise ValidationError("bad-rate", f"frame_rate_hz must be > 0, got {self.frame_rate_hz}")
        arr.setflags(write=False)
        object.__setattr__(self, "tokens", arr)

    def __len__(self) -> int:
        return int(self.tokens.size)

    def with_tokens(self, tokens, id: str | None = None) -> "TokenSequence":
        return TokenSequence(
            id=self.id if id is None else id,
            tokens=tokens,
            vocab_size=self.vocab_size,
            frame_rate_hz=self.frame_rate_hz,
        )

    def to_json_dict(self) -> dict:
        d = {"id": self.id, "tokens": [int(t) for t in self.tokens], "vocab_size": self.vocab_size}
        if self.frame_rate_hz is not None:
            d["frame_rate_hz"] = self.frame_rate_hz
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "TokenSequence":
        return cls(
            id=str(d["id"]),
            tokens=d["tokens"],
            vocab_size=int(d["vocab_size"]),
            frame_rate_hz=d.get("frame_rate_hz"),
        )


@dataclass(frozen=True)
class PerturbWindow:
    """Half-open token range [start, start+length) to corrupt.

    ``start >= 1`` always: at least one unperturbed context token must
    precede the window.  Bounds against a concrete sequence are checked by
    :meth:`validate_for`.
    """

    start: int
    length: int

    def __post_init__(self):
        if self.start < 1:
            raise ValidationError("window-out-of-bounds", f"window start must be >= 1, got {self.start}")
        if self.length < 0:
            raise ValidationError("window-out-of-bounds", f"window length must be >= 0, got {self.length}")

    @property
    def end(self) -> int:
        return self.start + self.length

    def validate_for(self, n_tokens: int) -> None:
        if self.end > n_tokens:
            raise ValidationError(
                "window-out-of-bounds",
                f"window [{self.start}, {self.end}) exceeds sequence length {n_tokens}",
            )


@dataclass(frozen=True)
class NoiseTokenModel:
    """How to produce replacement noise tokens.

    ``constant`` repeats the single token in ``noise_vocab``; ``iid`` draws
    uniformly from ``noise_vocab`` using the seed.
    """

    mode: str
    noise_vocab: tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "noise_vocab", tuple(int(t) for t in self.noise_vocab))
        if self.mode not in ("constant", "iid"):
            raise ValidationError("bad-noise-mode", f"unknown noise mode {self.mode!r}")
        if len(self.noise_vocab) == 0:
            raise ValidationError("empty-noise-vocab", "noise_vocab must be non-empty")
        if self.mode == "constant" and len(self.noise_vocab) != 1:
            raise ValidationError(
                "bad-noise-vocab",
                f"constant mode requires exactly one noise token, got {len(self.noise_vocab)}",
            )
        if any(t < 0 for t in self.noise_vocab):
            raise ValidationError("token-out-of-vocab", "noise token ids must be non-negative")

    def validate_for(self, vocab_size: int) -> None:
        for t in self.noise_vocab:
            if t >= vocab_size:
                raise ValidationError(
                    "token-out-of-vocab", f"noise token {t} outside vocabulary [0, {vocab_size})"
                )


def make_noise_tokens(length: int, model: NoiseTokenModel) -> np.ndarray:
    """Produce ``length`` noise tokens; deterministic given (model, length)."""
    if length < 0:
        raise ValidationError("bad-length", f"length must be >= 0, got {length}")
    if model.mode == "constant":
        return np.full(length, model.noise_vocab[0], dtype=np.int64)
    rng = np.random.default_rng(model.seed)
    vocab = np.asarray(model.noise_vocab, dtype=np.int64)
    return vocab[rng.integers(0, len(vocab), size=length)]


def inject_tokens(seq: TokenSequence, window: PerturbWindow, noise_tokens) -> TokenSequence:
    """Replace the window with the given tokens; everything else untouched."""
    window.validate_for(len(seq))
    noise = _as_token_array(noise_tokens)
    if noise.size != window.length:
        raise ValidationError(
            "length-mismatch",
            f"got {noise.size} noise tokens for a window of length {window.length}",
        )
    if noise.size and (noise.min() < 0 or noise.max() >= seq.vocab_size):
        raise ValidationError(
            "token-out-of-vocab", f"noise tokens must lie in [0, {seq.vocab_size})"
        )
    out = seq.tokens.copy()
    out[window.start : window.end] = noise
    return seq.with_tokens(out)


def shuffle_segments(
    seq: TokenSequence, window: PerturbWindow, segment_len: int, seed: int
) -> TokenSequence:
    """Permute consecutive segments of ``segment_len`` tokens inside the window.

    The window is split into ceil(length / segment_len) segments; the final
    segment may be shorter and takes part in the permutation like any other.
    The token multiset inside the window is preserved; tokens outside are
    bit-identical to the input.
    """
    window.validate_for(len(seq))
    if segment_len < 1:
        raise ValidationError("bad-segment-len", f"segment_len must be >= 1, got {segment_len}")
    if window.length == 0:
        return seq.with_tokens(seq.tokens.copy())
    inside = seq.tokens[window.start : window.end]
    bounds = list(range(0, window.length, segment_len)) + [window.length]
    segments = [inside[bounds[i] : bounds[i + 1]] for i in range(len(bounds) - 1)]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(segments))
    out = seq.tokens.copy()
    out[window.start : window.end] = np.concatenate([segments[i] for i in order])
    return seq.with_tokens(out)


@dataclass(frozen=True)
class PerturbationSpec:
    """Serializable description of one perturbation.

    ``kind`` is ``"noise"`` (overwrite with noise tokens) or ``"shuffle"``
    (permute segments).  Noise perturbations carry ``noise_mode`` and
    ``noise_vocab``; shuffles carry ``segment_len``.
    """

    kind: str
    start: int
    length: int
    seed: int = 0
    noise_mode: str = "constant"
    noise_vocab: tuple[int, ...] = ()
    segment_len: int = 1

    def __post_init__(self):
        if self.kind not in ("noise", "shuffle"):
            raise ValidationError("bad-kind", f"unknown perturbation kind {self.kind!r}")
        object.__setattr__(self, "noise_vocab", tuple(int(t) for t in self.noise_vocab))

    @property
    def window(self) -> PerturbWindow:
        return PerturbWindow(start=self.start, length=self.length)

    def apply(self, seq: TokenSequence) -> TokenSequence:
        if self.kind == "noise":
            model = NoiseTokenModel(mode=self.noise_mode, noise_vocab=self.noise_vocab, seed=self.seed)
            model.validate_for(seq.vocab_size)
            return inject_tokens(seq, self.window, make_noise_tokens(self.length, model))
        return shuffle_segments(seq, self.window, self.segment_len, self.seed)

    def to_json_dict(self) -> dict:
        d = {"kind": self.kind, "start": self.start, "length": self.length, "seed": self.seed}
        if self.kind == "noise":
            d["noise_mode"] = self.noise_mode
            d["noise_vocab"] = list(self.noise_vocab)
        else:
            d["segment_len"] = self.segment_len
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "PerturbationSpec":
        return cls(
            kind=str(d["kind"]),
            start=int(d["start"]),
            length=int(d["length"]),
            seed=int(d.get("seed", 0)),
            noise_mode=str(d.get("noise_mode", "constant")),
            noise_vocab=tuple(d.get("noise_vocab", ())),
            segment_len=int(d.get("segment_len", 1)),
        )


def derive_seed(master_seed: int, *parts: str | int) -> int:
    """Deterministic 63-bit child seed from a master seed and labels.

    SHA-256 over ``"{master}:{part}:{part}:..."``; the top bit is cleared so
    the result fits any signed 64-bit consumer.  Used to give every
    (sample, perturbation-length) pair its own stream regardless of how many
    other pairs exist.
    """
    text = ":".join([str(int(master_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def write_sequences_jsonl(path: str | Path, seqs: Iterable[TokenSequence]) -> None:
    """One JSON object per line: id, tokens, vocab_size, optional frame_rate_hz."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in seqs:
            fh.write(json.dumps(seq.to_json_dict(), sort_keys=True) + "\n")


def read_sequences_jsonl(path: str | Path) -> list[TokenSequence]:
    seqs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError("bad-jsonl", f"{path}:{lineno}: not valid JSON: {exc}") from exc
            seqs.append(TokenSequence.from_json_dict(d))
    return seqs

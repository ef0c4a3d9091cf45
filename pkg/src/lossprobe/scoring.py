"""Scorer contract shared by all model backends.

A scorer maps a token sequence to per-token negative log-likelihoods in
nats. Two backends exist: the builtin n-gram model (in-process, see
``toymodel``) and external subprocesses speaking a newline-delimited
JSON protocol over stdin/stdout:

    -> {"cmd":"hello"}
    <- {"ok":true,"name":"<scorer>","vocab_size":N,"loss_base":"nats"}
    -> {"cmd":"score","id":"s1","tokens":[...]}
    <- {"ok":true,"id":"s1","nll":[...]}          same length as tokens
    -> {"cmd":"shutdown"}
    <- {"ok":true}                                 then process exit 0

Failures are {"ok":false,"error":"..."}; any non-JSON line from the
backend is a protocol violation. The protocol is strictly one request in
flight per session; parallel scoring means opening multiple sessions.

Backends must be deterministic (identical input, identical trace) and
prefix-stable: sequences sharing a prefix get identical NLLs on it.
``check_conformance`` verifies both, plus length and finiteness, and is
run against any new backend before trusting its numbers.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import threading
import queue
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import TokenSequence, ValidationError


class BackendError(RuntimeError):
    """A scorer backend failed (spawn, handshake, scoring, or shutdown)."""


class ProtocolViolation(BackendError):
    """The backend broke the wire contract (bad JSON, bad lengths, non-finite values).

    ``token_index`` names the offending position when one exists.
    """

    def __init__(self, message: str, token_index: int | None = None):
        super().__init__(message)
        self.token_index = token_index


@dataclass(frozen=True, eq=False)
class LossTrace:
    """Per-token NLLs (nats) for one sequence under one scorer."""

    values: np.ndarray
    sequence_id: str
    scorer_id: str

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError("bad-shape", f"trace must be 1-D, got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ProtocolViolation(
                f"non-finite NLL at token index {bad} in trace for {self.sequence_id!r}",
                token_index=bad,
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)

    def total(self) -> float:
        """Sequence NLL: the sum of per-token values. Always derived, never stored."""
        return float(np.sum(self.values))


def write_trace_csv(path: str | Path, trace: LossTrace) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "nll"])
        for i, v in enumerate(trace.values):
            w.writerow([i, repr(float(v))])


def read_trace_csv(path: str | Path, sequence_id: str = "", scorer_id: str = "csv") -> LossTrace:
    import csv

    values = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or [h.strip() for h in header[:2]] != ["index", "nll"]:
            raise ValidationError("bad-csv", f"{path}: expected header 'index,nll'")
        for row in r:
            if not row:
                continue
            values.append(float(row[1]))
    sid = sequence_id or Path(path).stem
    return LossTrace(values=np.asarray(values, dtype=np.float64), sequence_id=sid, scorer_id=scorer_id)


class ScorerHandle:
    """A ready-to-score backend: builtin model or live external session.

    Handles are confined to one worker at a time. Builtin handles share an
    immutable model and may be duplicated freely; external handles own a
    subprocess and must be closed.
    """

    def __init__(self, kind: str, descriptor: str, name: str, vocab_size: int,
                 loss_base: str = "nats", model=None, session=None):
        self.kind = kind
        self.descriptor = descriptor
        self.name = name
        self.vocab_size = int(vocab_size)
        self.loss_base = loss_base
        self._model = model
        self._session = session

    def close(self) -> None:
        if self._session is not None:
            self._session.close()
            self._session = None

    def __enter__(self) -> "ScorerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def handshake_dict(self) -> dict:
        """Provenance block recorded in sweep reports."""
        return {
            "kind": self.kind,
            "descriptor": self.descriptor,
            "name": self.name,
            "vocab_size": self.vocab_size,
            "loss_base": self.loss_base,
        }


def open_builtin(model_or_path) -> ScorerHandle:
    """Handle over the builtin n-gram scorer; accepts a model file path or a model."""
    from . import toymodel

    if isinstance(model_or_path, (str, Path)):
        model = toymodel.load_model(model_or_path)
        descriptor = str(model_or_path)
    else:
        model = model_or_path
        descriptor = "<in-memory>"
    return ScorerHandle(
        kind="builtin-ngram",
        descriptor=descriptor,
        name=model.scorer_id,
        vocab_size=model.vocab_size,
        model=model,
    )


def open_external(command: str | list[str], args: list[str] | None = None,
                  timeout: float = 30.0) -> ScorerHandle:
    """Spawn an adapter subprocess and perform the hello handshake."""
    if isinstance(command, str):
        cmd = shlex.split(command)
    else:
        cmd = list(command)
    cmd += [str(a) for a in (args or [])]
    if not cmd:
        raise ValidationError("bad-command", "external scorer command is empty")
    session = _ExternalSession(cmd, timeout=timeout)
    try:
        hello = session.request({"cmd": "hello"}, timeout=timeout)
    except BackendError:
        session.close()
        raise
    name = hello.get("name")
    vocab_size = hello.get("vocab_size")
    if not isinstance(name, str) or not isinstance(vocab_size, int) or vocab_size < 1:
        session.close()
        raise ProtocolViolation(
            f"malformed handshake: need string 'name' and positive integer 'vocab_size', got {hello!r}"
        )
    loss_base = hello.get("loss_base", "nats")
    if loss_base != "nats":
        session.close()
        raise ProtocolViolation(f"unsupported loss_base {loss_base!r}; this toolkit works in nats")
    return ScorerHandle(
        kind="external",
        descriptor=" ".join(cmd),
        name=name,
        vocab_size=vocab_size,
        loss_base=loss_base,
        session=session,
    )


def open_scorer(descriptor: dict, base_dir: str | Path | None = None) -> ScorerHandle:
    """Open a scorer from a config descriptor.

    {"kind": "builtin-ngram", "model": "<path>"} or
    {"kind": "external", "command": "<cmd line>" | [argv...]}.
    Relative model paths resolve against ``base_dir`` (the config file's
    directory) when given.
    """
    kind = descriptor.get("kind")
    if kind == "builtin-ngram":
        model = descriptor.get("model")
        if not model:
            raise ValidationError("bad-scorer", "builtin-ngram scorer needs a 'model' path")
        path = Path(model)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return open_builtin(path)
    if kind == "external":
        command = descriptor.get("command")
        if not command:
            raise ValidationError("bad-scorer", "external scorer needs a 'command'")
        return open_external(command, timeout=float(descriptor.get("timeout_s", 30.0)))
    raise ValidationError("bad-scorer", f"unknown scorer kind {kind!r}")


def score_sequence(scorer: ScorerHandle, seq: TokenSequence) -> LossTrace:
    """Score one sequence; deterministic for a fixed scorer state."""
    if seq.vocab_size > scorer.vocab_size:
        raise ValidationError(
            "vocab-mismatch",
            f"sequence vocab {seq.vocab_size} exceeds scorer vocab {scorer.vocab_size}",
        )
    if scorer.kind == "builtin-ngram":
        from . import toymodel

        trace = toymodel.score_ngram(scorer._model, seq)
        return LossTrace(values=trace.values, sequence_id=seq.id, scorer_id=scorer.name)
    if scorer.kind != "external" or scorer._session is None:
        raise BackendError(f"scorer handle {scorer.kind!r} is not open for scoring")
    reply = scorer._session.request(
        {"cmd": "score", "id": seq.id, "tokens": [int(t) for t in seq.tokens]}
    )
    if reply.get("id") != seq.id:
        raise ProtocolViolation(f"response id {reply.get('id')!r} does not match request id {seq.id!r}")
    nll = reply.get("nll")
    if not isinstance(nll, list):
        raise ProtocolViolation(f"score response carries no 'nll' array: {reply!r}")
    if len(nll) != len(seq):
        raise ProtocolViolation(
            f"backend returned {len(nll)} values for {len(seq)} tokens of {seq.id!r}"
        )
    for i, v in enumerate(nll):
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ProtocolViolation(
                f"non-finite NLL at token index {i} in response for {seq.id!r}", token_index=i
            )
    return LossTrace(values=np.asarray(nll, dtype=np.float64), sequence_id=seq.id, scorer_id=scorer.name)


class _ExternalSession:
    """One adapter subprocess with strict request/response framing."""

    def __init__(self, cmd: list[str], timeout: float = 30.0):
        self.cmd = cmd
        self.default_timeout = timeout
        try:
            self.proc = subprocess.Popen(
                cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendError(f"cannot spawn scorer {cmd!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._stderr_tail: deque[str] = deque(maxlen=50)
        self._reader = threading.Thread(target=self._read_stdout, daemon=True)
        self._reader.start()
        self._err_reader = threading.Thread(target=self._read_stderr, daemon=True)
        self._err_reader.start()
        self._lock = threading.Lock()

    def _read_stdout(self) -> None:
        try:
            for line in self.proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def _read_stderr(self) -> None:
        try:
            for line in self.proc.stderr:
                self._stderr_tail.append(line.rstrip("\n"))
        except ValueError:
            pass

    def _diagnostic(self) -> str:
        tail = "\n".join(self._stderr_tail)
        return f" (backend stderr tail:\n{tail})" if tail else ""

    def request(self, obj: dict, timeout: float | None = None) -> dict:
        """Send one JSON line, read one JSON line. One in flight, ever."""
        timeout = self.default_timeout if timeout is None else timeout
        with self._lock:
            if self.proc.poll() is not None:
                raise BackendError(
                    f"scorer process already exited with code {self.proc.returncode}{self._diagnostic()}"
                )
            try:
                self.proc.stdin.write(json.dumps(obj) + "\n")
                self.proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise BackendError(f"scorer pipe closed while sending request: {exc}{self._diagnostic()}") from exc
            try:
                line = self._lines.get(timeout=timeout)
            except queue.Empty:
                raise BackendError(
                    f"scorer did not reply within {timeout:g} s to {obj.get('cmd')!r}{self._diagnostic()}"
                ) from None
            if line is None:
                raise BackendError(f"scorer closed its output stream mid-session{self._diagnostic()}")
            try:
                reply = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolViolation(f"backend emitted a non-JSON line: {line!r}") from exc
            if not isinstance(reply, dict):
                raise ProtocolViolation(f"backend reply is not a JSON object: {reply!r}")
            if reply.get("ok") is not True:
                raise BackendError(f"backend error: {reply.get('error', reply)!r}")
            return reply

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.request({"cmd": "shutdown"}, timeout=min(self.default_timeout, 5.0))
            except BackendError:
                pass
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait(timeout=5.0)
        for stream in (self.proc.stdout, self.proc.stderr, self.proc.stdin):
            try:
                if stream is not None:
                    stream.close()
            except OSError:
                pass


def check_conformance(scorer: ScorerHandle, seqs: list[TokenSequence]) -> dict:
    """Verify the backend contract on real sequences.

    Checks, per sequence: trace length equals T; all values finite
    (score_sequence already rejects otherwise); bitwise determinism across
    a repeated call; prefix determinism against a copy whose second half
    is rewritten. Raises BackendError on the first violation; returns a
    summary dict when everything holds.
    """
    if not seqs:
        raise ValidationError("empty-input", "conformance check needs at least one sequence")
    prefix_pairs = 0
    for seq in seqs:
        a = score_sequence(scorer, seq)
        if len(a) != len(seq):
            raise BackendError(f"trace length {len(a)} != sequence length {len(seq)} for {seq.id!r}")
        b = score_sequence(scorer, seq)
        if not np.array_equal(a.values, b.values):
            bad = int(np.flatnonzero(a.values != b.values)[0])
            raise BackendError(
                f"nondeterministic backend: values differ at index {bad} across repeat calls for {seq.id!r}"
            )
        if seq.vocab_size >= 2 and len(seq) >= 2:
            cut = len(seq) // 2
            mutated = seq.tokens.copy()
            mutated[cut:] = (mutated[cut:] + 1) % seq.vocab_size
            alt = score_sequence(scorer, seq.with_tokens(mutated, id=seq.id + "#suffix"))
            if not np.array_equal(a.values[:cut], alt.values[:cut]):
                bad = int(np.flatnonzero(a.values[:cut] != alt.values[:cut])[0])
                raise BackendError(
                    f"prefix determinism violated at index {bad} (< {cut}) for {seq.id!r}"
                )
            prefix_pairs += 1
    return {
        "sequences": len(seqs),
        "prefix_pairs": prefix_pairs,
        "determinism": "ok",
        "prefix_determinism": "ok",
        "length": "ok",
        "finiteness": "ok",
    }

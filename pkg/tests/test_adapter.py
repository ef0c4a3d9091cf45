"""End-to-end checks of the bundled subprocess scorer (adapter/).

These run only when node is available and the adapter has been built
(cd adapter && npm install && npm run build); otherwise they skip.
One [PASS]/[FAIL] line per scenario, like the acceptance suite.
"""

import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from lossprobe.core import TokenSequence, read_sequences_jsonl
from lossprobe.scoring import (
    BackendError,
    ProtocolViolation,
    check_conformance,
    open_builtin,
    open_external,
    score_sequence,
)

ADAPTER_DIR = Path(__file__).resolve().parent.parent / "adapter"
MAIN_JS = ADAPTER_DIR / "dist" / "main.js"
FIXTURES = ADAPTER_DIR / "fixtures"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not MAIN_JS.exists(),
    reason="adapter not built; run npm install && npm run build in adapter/",
)


def _verdict(ok: bool, label: str) -> None:
    print(("[PASS] " if ok else "[FAIL] ") + label)
    assert ok, label


def _adapter_cmd(*args: str) -> list[str]:
    return ["node", str(MAIN_JS), *args]


def test_roundtrip_parity_and_conformance():
    seqs = read_sequences_jsonl(FIXTURES / "eval.jsonl")
    assert len(seqs) == 20
    builtin = open_builtin(FIXTURES / "model.json")
    with open_external(_adapter_cmd("ngram", "--model", str(FIXTURES / "model.json"))) as ext:
        assert ext.name.startswith("ts-ngram(order=3,vocab=68,")
        assert ext.vocab_size == builtin.vocab_size == 68
        worst = 0.0
        for seq in seqs:
            a = score_sequence(ext, seq).values
            b = score_sequence(builtin, seq).values
            worst = max(worst, float(np.max(np.abs(a - b))))
        summary = check_conformance(ext, seqs)
    ok = worst <= 1e-6 and summary["sequences"] == 20
    _verdict(ok, f"round trip: adapter matches the builtin scorer (worst |diff| {worst:.3e} <= 1e-6, "
                 f"conformance on {summary['sequences']} sequences)")


def test_malformed_and_incomplete_requests_leave_session_alive():
    proc = subprocess.Popen(
        _adapter_cmd("stub", "--mode", "uniform", "--vocab-size", "8"),
        stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1,
    )
    try:
        def ask(line):
            proc.stdin.write(line + "\n")
            proc.stdin.flush()
            return json.loads(proc.stdout.readline())

        hello = ask('{"cmd":"hello"}')
        malformed = ask("this is not json {")
        missing = ask('{"cmd":"score","id":"x"}')
        alive = ask('{"cmd":"score","id":"y","tokens":[1,2,3]}')
        bye = ask('{"cmd":"shutdown"}')
        rc = proc.wait(timeout=10)
    finally:
        if proc.poll() is None:
            proc.kill()
    ok = (
        hello["ok"] is True
        and malformed["ok"] is False
        and missing["ok"] is False
        and alive["ok"] is True
        and len(alive["nll"]) == 3
        and bye["ok"] is True
        and rc == 0
    )
    _verdict(ok, "robustness: malformed and incomplete requests answered ok:false, session "
                 f"survived and shut down cleanly (exit {rc})")


def test_nan_reply_reported_with_token_index():
    seq = TokenSequence(id="nan-seq", tokens=np.arange(24, dtype=np.int64) % 8, vocab_size=8)
    with open_external(_adapter_cmd("stub", "--mode", "nan", "--vocab-size", "8")) as handle:
        with pytest.raises(ProtocolViolation) as first:
            score_sequence(handle, seq)
        # the session must still answer after a poisoned reply
        with pytest.raises(ProtocolViolation) as second:
            score_sequence(handle, seq)
    ok = (
        first.value.token_index == 17
        and "index 17" in str(first.value)
        and second.value.token_index == 17
    )
    _verdict(ok, "robustness: NaN reply surfaces as a protocol violation naming token index 17, "
                 "session keeps answering")


def test_scorer_exception_becomes_backend_error():
    seq = TokenSequence(id="err-seq", tokens=np.zeros(4, dtype=np.int64), vocab_size=8)
    with open_external(_adapter_cmd("stub", "--mode", "error", "--vocab-size", "8")) as handle:
        with pytest.raises(BackendError, match="stub configured to fail"):
            score_sequence(handle, seq)
        with pytest.raises(BackendError):
            score_sequence(handle, seq)
    _verdict(True, "robustness: scorer exception comes back as ok:false per request, without "
                   "killing the session")


def test_causal_lm_stub_serves_the_protocol():
    seqs = [
        TokenSequence(id="flat", tokens=np.arange(12, dtype=np.int64) % 6, vocab_size=6),
        TokenSequence(id="flat2", tokens=np.ones(9, dtype=np.int64), vocab_size=6),
    ]
    with open_external(_adapter_cmd("causal-lm", "--model", "uniform:6")) as handle:
        trace = score_sequence(handle, seqs[0])
        assert np.allclose(trace.values, np.log(6.0))
        summary = check_conformance(handle, seqs)
        assert summary["sequences"] == 2

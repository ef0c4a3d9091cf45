import sys
from pathlib import Path

import pytest

import lossprobe as lp

STUB_SCORER = Path(__file__).parent / "stubs" / "mock_scorer.py"


def stub_command(mode: str, vocab_size: int = 256) -> list[str]:
    return [sys.executable, str(STUB_SCORER), "--mode", mode, "--vocab-size", str(vocab_size)]


@pytest.fixture(scope="session")
def small_corpus():
    # default-size sequences (96 tokens), enough for fast scorer tests
    return lp.gen_corpus(lp.CorpusConfig(n_sequences=60, seed=7))


@pytest.fixture(scope="session")
def small_model(small_corpus):
    return lp.train_ngram(small_corpus[:50], order=4, alpha=0.1)


@pytest.fixture(scope="session")
def small_eval(small_corpus):
    return small_corpus[50:]

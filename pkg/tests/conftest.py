import pytest

from fakebert.encoder import EncoderConfig, tiny_encoder
from fakebert.estimator import make_tokenizer
from fakebert.synthetic import make_corpus

# settings under which every variant can fit the synthetic corpus quickly
TINY_TRAINING = dict(learning_rate=3e-3, cnn_filters=32, bilstm_hidden=32)
TINY_BATCH = 8

ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def corpus64():
    return make_corpus(64, seed=3)


@pytest.fixture(scope="session")
def tiny_tokenizer(corpus64):
    return make_tokenizer([r.text for r in corpus64], max_len=24)


@pytest.fixture
def tiny_enc(tiny_tokenizer):
    return tiny_encoder(EncoderConfig.tiny(vocab_size=tiny_tokenizer.vocab_size), seed=0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{status:4}] {number:>2}. {title}")

import numpy as np
import pytest

from camtrap.manifest import ImageRecord, LabelVocabulary, Manifest

VOCAB = LabelVocabulary(("empty", "wildebeest", "zebra"), 0)


def make_manifest(seasons, vocab=VOCAB, seq_of=None):
    """One record per season tag; record i is in sequence ``seq_of(i)`` (default: its own)."""
    recs = []
    k = len(vocab)
    for i, s in enumerate(seasons):
        labels = [0] * k
        labels[i % k] = 1
        seq = seq_of(i) if seq_of else f"q{i}"
        recs.append(ImageRecord(str(s), seq, f"img{i}", i, tuple(labels)))
    return Manifest(tuple(recs), vocab)


@pytest.fixture
def vocab():
    return VOCAB


@pytest.fixture(params=range(5))
def rng(request):
    return np.random.default_rng(request.param)


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)

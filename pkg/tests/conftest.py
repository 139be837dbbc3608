import pytest

from qaspan.annotate import ReplayAnnotator, extract_all
from qaspan.backends import BackendConfig, StubBackend
from qaspan.corpus import AnnotatedPair, Token
from qaspan.fixtures import build_fixture


@pytest.fixture(scope="session")
def fixture_corpus():
    dataset, anns = build_fixture()
    spans = extract_all(dataset, ReplayAnnotator(anns))
    return dataset, anns, spans


@pytest.fixture
def stub():
    return StubBackend(BackendConfig())


def make_pair(words, labels=None, pos=None, pair_id="p", document="", error_types=None):
    """Pair whose summary is the space-joined words."""
    labels = labels or [1] * len(words)
    pos = pos or ["noun"] * len(words)
    tokens, off = [], 0
    for i, (w, lab, p) in enumerate(zip(words, labels, pos)):
        et = (error_types[i] if error_types else "extrinsic") if lab == 0 else "none"
        tokens.append(Token(w, off, off + len(w), p, lab, et))
        off += len(w) + 1
    return AnnotatedPair(pair_id, document, " ".join(words), tokens)

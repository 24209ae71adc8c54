import numpy as np
import pytest

from jointlink.datamodel import Sentence, Token, TrainingTuple, make_span
from jointlink.embedding import init_params


GERMAN = [
    ("German", "NNP"), ("is", "VBZ"), ("the", "DT"), ("mother", "NN"), ("tongue", "NN"),
    ("of", "IN"), ("a", "DT"), ("substantial", "JJ"), ("majority", "NN"), ("of", "IN"),
    ("ethnic", "JJ"), ("Germans", "NNPS"), (".", "."),
]


@pytest.fixture
def german_sentence():
    return Sentence("ex", 3, tuple(Token(w, p) for w, p in GERMAN))


@pytest.fixture
def german_span(german_sentence):
    return make_span(german_sentence, 0, 1, mid=0)


def sentence(doc, idx, words, pos=None):
    pos = pos or [None] * len(words)
    return Sentence(doc, idx, tuple(Token(w, p) for w, p in zip(words, pos)))


def tuple_for(sent, start, end, mid, entity, weight=1.0):
    return TrainingTuple(make_span(sent, start, end, mid), entity, weight)


def small_store(d=8, seed=0, scale=0.4, features=("f0", "f1", "f2"), mids=(0, 1, 2, 3),
                entities=("A", "B", "C", "D", "E"), types=("T1", "T2", "T3")):
    """Store with Gaussian rows, larger than the usual init so gradients are non-trivial."""
    params = init_params(list(features), list(mids), list(entities), list(types), d=d, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    for table in params.tables.values():
        table[:] = rng.normal(scale=scale / np.sqrt(d), size=table.shape) * np.sqrt(d) / 2
    return params


def zero_store(d=4, **kw):
    params = small_store(d=d, **kw)
    for table in params.tables.values():
        table[:] = 0.0
    return params


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

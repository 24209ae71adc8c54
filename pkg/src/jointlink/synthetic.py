"""Generator for a small planted-signal linking corpus.

Two surfaces are ambiguous ("German", "Java").  The gold entity of each
occurrence is fixed by topic words placed next to it, while dictionary anchor
counts favour the entity that is *less* common in the held-out split, so a
prior-only linker is misled.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .datamodel import (
    CandidateDictionary,
    KnowledgeGraph,
    Sentence,
    Token,
    TrainingTuple,
    make_span,
    save_corpus,
    save_dictionary,
    save_knowledge_graph,
)

AMBIGUOUS = {
    "German": ("Germany", "German_language"),
    "Java": ("Java_island", "Java_language"),
}

TOPIC = {
    "Germany": ["border", "economy", "chancellor", "federal", "parliament", "army"],
    "German_language": ["grammar", "vocabulary", "dialect", "pronunciation", "verbs", "spelling"],
    "Java_island": ["volcano", "rice", "coast", "tropical", "farmers", "monsoon"],
    "Java_language": ["compiler", "bytecode", "classes", "runtime", "syntax", "libraries"],
}

# unambiguous companion mention for each ambiguous-surface entity
COMPANION = {
    "Germany": ("Berlin", "Berlin"),
    "German_language": ("English", "English_language"),
    "Java_island": ("Indonesia", "Indonesia"),
    "Java_language": ("Python", "Python_language"),
}

FILLER = ["today", "often", "people", "many", "report", "years", "new", "large"]

# prior counts tilted toward the first entity of each ambiguous surface
DICT_COUNTS = {
    ("German", "Germany"): 40, ("German", "German_language"): 10,
    ("Java", "Java_island"): 40, ("Java", "Java_language"): 10,
    ("Berlin", "Berlin"): 20, ("English", "English_language"): 20,
    ("Indonesia", "Indonesia"): 20, ("Python", "Python_language"): 20,
}

KG_EDGES = [
    ("Germany", "Berlin"), ("German_language", "English_language"),
    ("Java_island", "Indonesia"), ("Java_language", "Python_language"),
]
KG_TYPES = [
    ("Germany", "country"), ("Indonesia", "country"), ("Berlin", "city"),
    ("Java_island", "island"), ("German_language", "language"), ("English_language", "language"),
    ("Java_language", "programming_language"), ("Python_language", "programming_language"),
]


@dataclass
class SyntheticData:
    train_sentences: list[Sentence]
    train_tuples: list[TrainingTuple]
    test_sentences: list[Sentence]
    test_tuples: list[TrainingTuple]
    kg: KnowledgeGraph
    dictionary: CandidateDictionary


def _tok(surface: str, pos: str) -> Token:
    return Token(surface, pos)


def _sentence(rng: random.Random, doc: str, idx: int, surface: str, entity: str, mid: int):
    """One sentence with the ambiguous mention and its companion; returns (sentence, tuples)."""
    t1, t2 = rng.sample(TOPIC[entity], 2)
    comp_surface, comp_entity = COMPANION[entity]
    filler = rng.choice(FILLER)
    layout = rng.randrange(3)
    if layout == 0:
        toks = [("The", "DT"), (t1, "NN"), ("of", "IN"), (surface, "NNP"), ("shapes", "VBZ"),
                (t2, "NN"), ("in", "IN"), (comp_surface, "NNP"), (filler, "RB"), (".", ".")]
        spans = [(3, 4, entity), (7, 8, comp_entity)]
    elif layout == 1:
        toks = [(surface, "NNP"), (t1, "NN"), ("follows", "VBZ"), (t2, "NN"), ("like", "IN"),
                (comp_surface, "NNP"), (filler, "NN"), (".", ".")]
        spans = [(0, 1, entity), (5, 6, comp_entity)]
    else:
        toks = [(comp_surface, "NNP"), ("and", "CC"), (filler, "NNS"), ("discuss", "VBP"), (t1, "NN"),
                ("and", "CC"), (surface, "NNP"), (t2, "NN"), (".", ".")]
        spans = [(6, 7, entity), (0, 1, comp_entity)]
    sent = Sentence(doc, idx, tuple(_tok(s, p) for s, p in toks))
    tuples = []
    for start, end, ent in sorted(spans):
        tuples.append(TrainingTuple(make_span(sent, start, end, mid), ent))
        mid += 1
    return sent, tuples, mid


def _split(rng: random.Random, prefix: str, n_docs: int, per_doc: int, minority_share: float, mid: int):
    sentences, tuples = [], []
    for d in range(n_docs):
        doc = f"{prefix}{d:03d}"
        for s in range(per_doc):
            surface = rng.choice(sorted(AMBIGUOUS))
            majority, minority = AMBIGUOUS[surface]
            if s < 2:
                # first two sentences of every document use both senses of one surface
                surface = "German" if d % 2 == 0 else "Java"
                majority, minority = AMBIGUOUS[surface]
                entity = majority if s == 0 else minority
            else:
                entity = minority if rng.random() < minority_share else majority
            sent, tups, mid = _sentence(rng, doc, s, surface, entity, mid)
            sentences.append(sent)
            tuples.extend(tups)
    return sentences, tuples, mid


def generate(seed: int = 0, train_docs: int = 20, test_docs: int = 10, per_doc: int = 4,
             test_minority_share: float = 0.8) -> SyntheticData:
    """Build train/test corpora, the knowledge graph and the candidate dictionary.

    In the test split, ambiguous mentions beyond each document's first two
    sentences go to the low-prior entity with probability ``test_minority_share``.
    """
    rng = random.Random(seed)
    train_s, train_t, mid = _split(rng, "train", train_docs, per_doc, 0.5, 0)
    test_s, test_t, _ = _split(rng, "test", test_docs, per_doc, test_minority_share, mid)

    kg = KnowledgeGraph()
    for a, b in KG_EDGES:
        kg.add_ee(a, b, 1.0)
    for e, t in KG_TYPES:
        kg.add_et(e, t, 1.0)
    dictionary = CandidateDictionary()
    for (surface, entity), count in DICT_COUNTS.items():
        dictionary.add(surface, entity, count)
    return SyntheticData(train_s, train_t, test_s, test_t, kg, dictionary)


def write(directory, data: SyntheticData) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": directory / "train.tsv",
        "test": directory / "test.tsv",
        "kg": directory / "kg.tsv",
        "dict": directory / "dict.tsv",
    }
    save_corpus(paths["train"], data.train_sentences, data.train_tuples)
    save_corpus(paths["test"], data.test_sentences, data.test_tuples)
    save_knowledge_graph(paths["kg"], data.kg)
    save_dictionary(paths["dict"], data.dictionary)
    return paths

"""Corpus, knowledge-graph and candidate-dictionary types plus their file loaders.

File formats (all UTF-8, tab separated):

* corpus: ``doc_id TAB sent_index TAB tok|POS|cluster ... TAB start,end,entity;...``
  POS and cluster are optional per token (``tok``, ``tok|NN``, ``tok||0110``).
  The entity ``NIL`` (or ``--NME--``) marks an unlinkable mention.
* knowledge graph: ``subj TAB predicate TAB obj TAB weight`` where the
  predicate ``is-a`` routes to entity-type edges and anything else to
  entity-entity edges.
* dictionary: ``surface TAB entity TAB count``.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

logger = logging.getLogger(__name__)

NIL_ENTITIES = frozenset({"NIL", "--NME--"})
IS_A = "is-a"


class FormatError(ValueError):
    """A data file could not be parsed."""


class SpanError(FormatError):
    """A mention span does not fit in its sentence."""


@dataclass(frozen=True)
class Token:
    surface: str
    pos: Optional[str] = None
    brown_cluster: Optional[str] = None

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")
        if self.pos == "" or self.brown_cluster == "":
            raise ValueError("absent annotations must be None, not empty strings")


@dataclass(frozen=True)
class Sentence:
    doc_id: str
    sent_index: int
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if self.sent_index < 0:
            raise ValueError("sent_index must be non-negative")
        if not self.tokens:
            raise ValueError("sentence must have at least one token")

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.sent_index)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class MentionSpan:
    sentence_ref: tuple[str, int]
    start: int
    end: int
    surface: str
    mid: int


@dataclass(frozen=True)
class TrainingTuple:
    """One (sentence, mention, mid, entity) record.

    ``gold_entity`` is None for unlinkable mentions.  ``weight`` scales the
    tuple's contribution to co-occurrence counts (augmentation anchors may be
    down-weighted).
    """

    span: MentionSpan
    gold_entity: Optional[str]
    weight: float = 1.0


def make_span(sentence: Sentence, start: int, end: int, mid: int) -> MentionSpan:
    if not 0 <= start < end <= len(sentence):
        raise SpanError(
            f"span [{start},{end}) out of range for doc {sentence.doc_id!r} "
            f"sentence {sentence.sent_index} (length {len(sentence)})"
        )
    surface = " ".join(t.surface for t in sentence.tokens[start:end])
    return MentionSpan(sentence.key, start, end, surface, mid)


@dataclass
class KnowledgeGraph:
    entities: set[str] = field(default_factory=set)
    types: set[str] = field(default_factory=set)
    # undirected: keyed by the sorted endpoint pair
    ee_weights: dict[tuple[str, str], float] = field(default_factory=dict)
    et_weights: dict[tuple[str, str], float] = field(default_factory=dict)
    _adjacent: dict[str, set[str]] = field(default_factory=lambda: defaultdict(set), repr=False)

    def add_ee(self, a: str, b: str, weight: float = 1.0) -> None:
        if weight <= 0:
            raise ValueError(f"edge weight must be positive, got {weight}")
        key = (a, b) if a <= b else (b, a)
        self.entities.update((a, b))
        self.ee_weights[key] = self.ee_weights.get(key, 0.0) + weight
        self._adjacent[a].add(b)
        self._adjacent[b].add(a)

    def add_et(self, entity: str, type_: str, weight: float = 1.0) -> None:
        if weight <= 0:
            raise ValueError(f"edge weight must be positive, got {weight}")
        self.entities.add(entity)
        self.types.add(type_)
        key = (entity, type_)
        self.et_weights[key] = self.et_weights.get(key, 0.0) + weight

    def has_ee_edge(self, a: str, b: str) -> bool:
        return b in self._adjacent.get(a, ())

    def ee_weight(self, a: str, b: str) -> float:
        return self.ee_weights.get((a, b) if a <= b else (b, a), 0.0)

    @property
    def ee_edges(self) -> list[tuple[str, str, float]]:
        return [(a, b, w) for (a, b), w in sorted(self.ee_weights.items())]

    @property
    def et_edges(self) -> list[tuple[str, str, float]]:
        return [(e, t, w) for (e, t), w in sorted(self.et_weights.items())]


@dataclass
class CandidateDictionary:
    entries: dict[str, dict[str, float]] = field(default_factory=dict)

    def add(self, surface: str, entity: str, count: float) -> None:
        if count <= 0:
            raise ValueError(f"anchor count must be positive, got {count}")
        cands = self.entries.setdefault(surface, {})
        cands[entity] = cands.get(entity, 0.0) + count

    def __contains__(self, surface: str) -> bool:
        return surface in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def surfaces(self) -> set[str]:
        return set(self.entries)

    def entities(self) -> set[str]:
        return {e for cands in self.entries.values() for e in cands}

    def counts(self, surface: str) -> dict[str, float]:
        return dict(self.entries.get(surface, {}))


# -- corpus -------------------------------------------------------------------


def parse_token(raw: str) -> Token:
    parts = raw.split("|")
    surface = parts[0]
    pos = parts[1] if len(parts) > 1 and parts[1] else None
    cluster = parts[2] if len(parts) > 2 and parts[2] else None
    return Token(surface, pos, cluster)


def format_token(tok: Token) -> str:
    if tok.brown_cluster is not None:
        return f"{tok.surface}|{tok.pos or ''}|{tok.brown_cluster}"
    if tok.pos is not None:
        return f"{tok.surface}|{tok.pos}"
    return tok.surface


def parse_sentence_record(fields: Sequence[str], lineno: int) -> tuple[Sentence, list[tuple[int, int, Optional[str]]]]:
    if len(fields) not in (3, 4):
        raise FormatError(f"line {lineno}: expected 3 or 4 tab-separated fields, got {len(fields)}")
    doc_id, raw_index, raw_tokens = fields[0], fields[1], fields[2]
    try:
        sent_index = int(raw_index)
    except ValueError:
        raise FormatError(f"line {lineno}: sentence index {raw_index!r} is not an integer") from None
    try:
        tokens = tuple(parse_token(t) for t in raw_tokens.split(" ") if t)
        sentence = Sentence(doc_id, sent_index, tokens)
    except ValueError as exc:
        raise FormatError(f"line {lineno}: {exc}") from None

    mentions = []
    raw_mentions = fields[3].strip() if len(fields) == 4 else ""
    for item in filter(None, raw_mentions.split(";")):
        parts = item.split(",", 2)
        if len(parts) != 3:
            raise FormatError(f"line {lineno}: bad mention record {item!r}")
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(f"line {lineno}: bad mention offsets in {item!r}") from None
        entity = parts[2] if parts[2] not in NIL_ENTITIES else None
        mentions.append((start, end, entity))
    return sentence, mentions


def iter_sentence_records(lines: Iterable[str], first_lineno: int = 1) -> Iterator[tuple[int, Sentence, list]]:
    for lineno, line in enumerate(lines, first_lineno):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        sentence, mentions = parse_sentence_record(line.split("\t"), lineno)
        yield lineno, sentence, mentions


def load_corpus(path, start_mid: int = 0) -> tuple[list[Sentence], list[TrainingTuple]]:
    """Load sentences and their annotated mentions.

    Every mention receives a fresh mid, counting up from ``start_mid`` in file
    order.
    """
    sentences: list[Sentence] = []
    tuples: list[TrainingTuple] = []
    seen: set[tuple[str, int]] = set()
    mid = start_mid
    with open(path, encoding="utf-8") as fh:
        for lineno, sentence, mentions in iter_sentence_records(fh):
            if sentence.key in seen:
                raise FormatError(
                    f"line {lineno}: duplicate sentence {sentence.sent_index} in doc {sentence.doc_id!r}"
                )
            seen.add(sentence.key)
            sentences.append(sentence)
            for start, end, entity in mentions:
                tuples.append(TrainingTuple(make_span(sentence, start, end, mid), entity))
                mid += 1
    logger.info("loaded %d sentences, %d mentions from %s", len(sentences), len(tuples), path)
    return sentences, tuples


def format_sentence_record(sentence: Sentence, tuples: Sequence[TrainingTuple]) -> str:
    mentions = ";".join(
        f"{t.span.start},{t.span.end},{t.gold_entity if t.gold_entity is not None else 'NIL'}"
        for t in tuples
    )
    tokens = " ".join(format_token(t) for t in sentence.tokens)
    return f"{sentence.doc_id}\t{sentence.sent_index}\t{tokens}\t{mentions}"


def save_corpus(path, sentences: Sequence[Sentence], tuples: Sequence[TrainingTuple]) -> None:
    by_sentence = defaultdict(list)
    for t in tuples:
        by_sentence[t.span.sentence_ref].append(t)
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(format_sentence_record(s, by_sentence.get(s.key, [])) + "\n")


def filter_linkable(tuples: Iterable[TrainingTuple], dictionary: CandidateDictionary) -> tuple[list[TrainingTuple], int]:
    """Keep tuples whose gold entity is a dictionary candidate for the surface.

    Returns the kept tuples and the number dropped.
    """
    kept = []
    dropped = 0
    for t in tuples:
        if t.gold_entity is not None and t.gold_entity in dictionary.entries.get(t.span.surface, {}):
            kept.append(t)
        else:
            dropped += 1
    if dropped:
        logger.warning("dropped %d mentions without a dictionary candidate for their gold entity", dropped)
    return kept, dropped


# -- knowledge graph ----------------------------------------------------------


def load_knowledge_graph(path) -> KnowledgeGraph:
    kg = KnowledgeGraph()
    pending_types: list[tuple[int, str, str, float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) not in (3, 4):
                raise FormatError(f"line {lineno}: expected 3 or 4 tab-separated fields, got {len(fields)}")
            subj, pred, obj = fields[:3]
            try:
                weight = float(fields[3]) if len(fields) == 4 else 1.0
            except ValueError:
                raise FormatError(f"line {lineno}: weight {fields[3]!r} is not a number") from None
            if weight <= 0:
                raise FormatError(f"line {lineno}: weight must be positive")
            if not subj or not obj:
                raise FormatError(f"line {lineno}: empty subject or object")
            if pred == IS_A:
                pending_types.append((lineno, subj, obj, weight))
            else:
                kg.add_ee(subj, obj, weight)
    for lineno, entity, type_, weight in pending_types:
        if type_ in kg.entities:
            raise FormatError(f"line {lineno}: type {type_!r} is also used as an entity")
        kg.add_et(entity, type_, weight)
    return kg


# -- dictionary ---------------------------------------------------------------


def load_dictionary(path) -> CandidateDictionary:
    dictionary = CandidateDictionary()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise FormatError(f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
            surface, entity, raw = fields
            try:
                count = float(raw)
            except ValueError:
                raise FormatError(f"line {lineno}: count {raw!r} is not a number") from None
            if count <= 0:
                raise FormatError(f"line {lineno}: count must be positive, got {raw}")
            dictionary.add(surface, entity, count)
    return dictionary


def save_dictionary(path, dictionary: CandidateDictionary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for surface in sorted(dictionary.entries):
            for entity, count in sorted(dictionary.entries[surface].items()):
                fh.write(f"{surface}\t{entity}\t{count:g}\n")


def save_knowledge_graph(path, kg: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b, w in kg.ee_edges:
            fh.write(f"{a}\trelated\t{b}\t{w:g}\n")
        for e, t, w in kg.et_edges:
            fh.write(f"{e}\t{IS_A}\t{t}\t{w:g}\n")


def sentence_index(sentences: Iterable[Sentence]) -> dict[tuple[str, int], Sentence]:
    return {s.key: s for s in sentences}

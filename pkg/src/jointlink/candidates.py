"""Candidate generation, anchor-based prior probabilities and training-data augmentation."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Collection, Iterable, Optional, Sequence

from .datamodel import (
    CandidateDictionary,
    FormatError,
    MentionSpan,
    Sentence,
    TrainingTuple,
    iter_sentence_records,
    make_span,
)

logger = logging.getLogger(__name__)


class NoStatisticsError(KeyError):
    """No anchors were observed for a surface form."""


def candidates_for(surface: str, dictionary: CandidateDictionary) -> list[str]:
    """Candidates by descending anchor count, ties broken lexicographically."""
    cands = dictionary.entries.get(surface)
    if not cands:
        return []
    return [e for e, _ in sorted(cands.items(), key=lambda kv: (-kv[1], kv[0]))]


@dataclass
class AnchorStats:
    pair: dict[tuple[str, str], float] = field(default_factory=dict)
    total: dict[str, float] = field(default_factory=dict)

    def add(self, surface: str, entity: str, count: float = 1.0) -> None:
        if count < 0:
            raise ValueError("anchor counts must be non-negative")
        self.pair[surface, entity] = self.pair.get((surface, entity), 0.0) + count
        self.total[surface] = self.total.get(surface, 0.0) + count

    def count(self, surface: str, entity: Optional[str] = None) -> float:
        if entity is None:
            return self.total.get(surface, 0.0)
        return self.pair.get((surface, entity), 0.0)

    def entities(self, surface: str) -> list[str]:
        return sorted(e for (m, e) in self.pair if m == surface)

    @classmethod
    def from_dictionary(cls, dictionary: CandidateDictionary) -> "AnchorStats":
        stats = cls()
        for surface, cands in dictionary.entries.items():
            for entity, count in cands.items():
                stats.add(surface, entity, count)
        return stats

    @classmethod
    def from_tuples(
        cls,
        tuples: Iterable[TrainingTuple],
        augmentation: Iterable[TrainingTuple] = (),
        down_weight: float = 1.0,
    ) -> "AnchorStats":
        stats = cls()
        for t in tuples:
            if t.gold_entity is not None:
                stats.add(t.span.surface, t.gold_entity, 1.0)
        for t in augmentation:
            if t.gold_entity is not None:
                stats.add(t.span.surface, t.gold_entity, down_weight)
        return stats


def prior_probability(surface: str, entity: str, stats: AnchorStats) -> float:
    total = stats.count(surface)
    if total <= 0:
        raise NoStatisticsError(f"no anchor statistics for surface {surface!r}")
    return stats.count(surface, entity) / total


# -- augmentation -------------------------------------------------------------


@dataclass
class AnchoredArticle:
    article_id: str
    sentences: list[Sentence]
    anchors: list[tuple[MentionSpan, str]]
    inlinks: int = 0
    outlinks: int = 0


def _anchor_surfaces(article: AnchoredArticle) -> set[str]:
    return {span.surface for span, _ in article.anchors}


def select_articles(
    articles: Iterable[AnchoredArticle],
    dict_surfaces: Collection[str],
    min_links: int = 5,
) -> list[AnchoredArticle]:
    """Articles with at least one dictionary anchor and more than ``min_links`` links."""
    return [
        a for a in articles
        if a.inlinks + a.outlinks > min_links and not _anchor_surfaces(a).isdisjoint(dict_surfaces)
    ]


def filter_sentences(article: AnchoredArticle, dict_surfaces: Collection[str]) -> list[Sentence]:
    """Sentences of ``article`` holding at least one anchor whose surface is in the dictionary."""
    keep = {span.sentence_ref for span, _ in article.anchors if span.surface in dict_surfaces}
    return [s for s in article.sentences if s.key in keep]


def load_articles(path, start_mid: int = 0) -> list[AnchoredArticle]:
    """Parse an anchored-article file.

    Each article starts with ``#article TAB id TAB inlinks TAB outlinks`` and
    is followed by sentence records in the corpus format; the mention list of
    a record holds the anchors.
    """
    articles: list[AnchoredArticle] = []
    current: Optional[AnchoredArticle] = None
    mid = start_mid
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#article"):
                fields = line.split("\t")
                if len(fields) != 4:
                    raise FormatError(f"line {lineno}: article header needs 4 fields")
                try:
                    inl, outl = int(fields[2]), int(fields[3])
                except ValueError:
                    raise FormatError(f"line {lineno}: link counts must be integers") from None
                if inl < 0 or outl < 0:
                    raise FormatError(f"line {lineno}: link counts must be non-negative")
                current = AnchoredArticle(fields[1], [], [], inl, outl)
                articles.append(current)
                continue
            if current is None:
                raise FormatError(f"line {lineno}: sentence record before any #article header")
            (_, sentence, mentions), = iter_sentence_records([line], lineno)
            current.sentences.append(sentence)
            for start, end, entity in mentions:
                span = make_span(sentence, start, end, mid)
                mid += 1
                if entity is not None:
                    current.anchors.append((span, entity))
    return articles


def augment(
    articles: Sequence[AnchoredArticle],
    dictionary: CandidateDictionary,
    min_links: int = 5,
    down_weight: float = 1.0,
) -> tuple[list[Sentence], list[TrainingTuple]]:
    """Turn selected articles into extra training sentences and tuples.

    Only anchors whose entity is a dictionary candidate for the surface are kept.
    """
    surfaces = dictionary.surfaces()
    sentences: list[Sentence] = []
    tuples: list[TrainingTuple] = []
    for article in select_articles(articles, surfaces, min_links):
        kept = filter_sentences(article, surfaces)
        keys = {s.key for s in kept}
        sentences.extend(kept)
        for span, entity in article.anchors:
            if span.sentence_ref in keys and entity in dictionary.entries.get(span.surface, {}):
                tuples.append(TrainingTuple(span, entity, down_weight))
    logger.info("augmentation: %d sentences, %d anchors", len(sentences), len(tuples))
    return sentences, tuples

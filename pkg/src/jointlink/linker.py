"""Mention linking with learned embeddings, the prior baseline, and evaluation metrics."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .candidates import AnchorStats, candidates_for, prior_probability
from .datamodel import CandidateDictionary, MentionSpan, Sentence, TrainingTuple
from .embedding import TARGET, ParamStore, mention_vector_from_features
from .features import FeatureConfig, extract_features


class NoCandidateError(LookupError):
    """The mention's surface has no dictionary candidates (unlinkable)."""


@dataclass(frozen=True)
class Prediction:
    span: MentionSpan
    predicted: str
    score: float
    candidate_scores: tuple[tuple[str, float], ...]


def _prior(dictionary: CandidateDictionary, surface: str, entity: str) -> float:
    cands = dictionary.entries.get(surface, {})
    total = sum(cands.values())
    return cands.get(entity, 0.0) / total if total else 0.0


def link_mention(
    sentence: Sentence,
    span: MentionSpan,
    dictionary: CandidateDictionary,
    params: ParamStore,
    cfg: Optional[FeatureConfig] = None,
) -> Prediction:
    """Score each candidate by m . y_e with m the sum of the mention's feature vectors.

    Ties go to the higher prior, then to the lexicographically smaller id.
    """
    cands = candidates_for(span.surface, dictionary)
    if not cands:
        raise NoCandidateError(f"no candidates for {span.surface!r}")
    m = mention_vector_from_features(extract_features(sentence, span, cfg), params)
    scored = []
    for e in cands:
        score = float(params.vec(TARGET, e) @ m) if params.has(TARGET, e) else 0.0
        scored.append((e, score))
    best = min(scored, key=lambda es: (-es[1], -_prior(dictionary, span.surface, es[0]), es[0]))
    return Prediction(span, best[0], best[1], tuple(scored))


def baseline_prior_link(span: MentionSpan, dictionary: CandidateDictionary,
                        stats: Optional[AnchorStats] = None) -> Prediction:
    """Pick the candidate with the largest prior p(e|m); ties lexicographic."""
    cands = candidates_for(span.surface, dictionary)
    if not cands:
        raise NoCandidateError(f"no candidates for {span.surface!r}")
    stats = stats or AnchorStats.from_dictionary(dictionary)
    scored = [(e, prior_probability(span.surface, e, stats)) for e in cands]
    best = min(scored, key=lambda es: (-es[1], es[0]))
    return Prediction(span, best[0], best[1], tuple(scored))


def link_all(
    sentences: Mapping[tuple[str, int], Sentence],
    spans: Iterable[MentionSpan],
    dictionary: CandidateDictionary,
    params: ParamStore,
    cfg: Optional[FeatureConfig] = None,
) -> tuple[list[Prediction], list[MentionSpan]]:
    """Link every span; returns predictions and the spans left unlinkable."""
    preds, unlinkable = [], []
    for span in spans:
        try:
            preds.append(link_mention(sentences[span.sentence_ref], span, dictionary, params, cfg))
        except NoCandidateError:
            unlinkable.append(span)
    return preds, unlinkable


# -- metrics ------------------------------------------------------------------

Preds = Union[Mapping[int, str], Sequence[Prediction]]


def _by_mid(preds: Preds) -> Mapping[int, str]:
    if isinstance(preds, Mapping):
        return preds
    return {p.span.mid: p.predicted for p in preds}


def _linkable(golds: Iterable[TrainingTuple]) -> list[TrainingTuple]:
    return [g for g in golds if g.gold_entity is not None]


def micro_accuracy(preds: Preds, golds: Sequence[TrainingTuple]) -> float:
    """Correct / total over linkable gold mentions (gold_entity not None)."""
    by_mid = _by_mid(preds)
    linkable = _linkable(golds)
    if not linkable:
        raise ValueError("no linkable mentions to evaluate")
    correct = sum(by_mid.get(g.span.mid) == g.gold_entity for g in linkable)
    return correct / len(linkable)


def _group_key(span: MentionSpan, level: str):
    if level == "sentence":
        return span.sentence_ref
    if level == "document":
        return span.sentence_ref[0]
    raise ValueError(f"unknown grouping level {level!r}")


def macro_accuracy(preds: Preds, golds: Sequence[TrainingTuple], level: str = "sentence") -> float:
    """Mean per-group accuracy; groups without linkable mentions are left out."""
    by_mid = _by_mid(preds)
    groups: dict = defaultdict(list)
    for g in _linkable(golds):
        groups[_group_key(g.span, level)].append(by_mid.get(g.span.mid) == g.gold_entity)
    if not groups:
        raise ValueError("no groups with linkable mentions")
    return float(np.mean([sum(v) / len(v) for v in groups.values()]))


def ndcg_at_k(ranked: Sequence[str], relevance: Mapping[str, float], k: int) -> float:
    if k < 1:
        raise ValueError("k must be at least 1")
    dcg = sum(relevance.get(e, 0.0) / math.log2(i + 2) for i, e in enumerate(ranked[:k]))
    ideal = sorted(relevance.values(), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    return dcg / idcg if idcg > 0 else 0.0


def entity_relatedness_rank(query: str, candidates: Sequence[str], params: ParamStore) -> list[str]:
    """Candidates by descending y_query . y_candidate, ties lexicographic."""
    for e in (query, *candidates):
        if not params.has(TARGET, e):
            raise KeyError(f"unknown entity {e!r}")
    q = params.vec(TARGET, query)
    scores = {c: float(params.vec(TARGET, c) @ q) for c in candidates}
    return sorted(candidates, key=lambda c: (-scores[c], c))


def same_mention_documents(golds: Iterable[TrainingTuple]) -> set[str]:
    """Documents in which one surface form links to more than one gold entity."""
    seen: dict[tuple[str, str], set[str]] = defaultdict(set)
    for g in _linkable(golds):
        seen[g.span.sentence_ref[0], g.span.surface].add(g.gold_entity)
    return {doc for (doc, _), ents in seen.items() if len(ents) > 1}


def same_mention_subset_eval(golds: Sequence[TrainingTuple], preds: Preds) -> tuple[Optional[float], Optional[float], int]:
    """Micro and document-level macro accuracy on the same-mention documents.

    An empty subset gives ``(None, None, 0)``.
    """
    docs = same_mention_documents(golds)
    subset = [g for g in golds if g.span.sentence_ref[0] in docs]
    if not _linkable(subset):
        return None, None, 0
    return micro_accuracy(preds, subset), macro_accuracy(preds, subset, "document"), len(docs)


# -- prediction files ----------------------------------------------------------


def write_predictions(path, preds: Iterable[Prediction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in preds:
            doc, sent = p.span.sentence_ref
            fh.write(f"{doc}\t{sent}\t{p.span.start}\t{p.span.end}\t{p.predicted}\t{p.score!r}\n")


def read_predictions(path) -> dict[tuple[str, int, int, int], str]:
    """Map (doc_id, sent_index, start, end) to the predicted entity."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 tab-separated fields")
            try:
                key = (fields[0], int(fields[1]), int(fields[2]), int(fields[3]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad integer field") from None
            out[key] = fields[4]
    return out


def align_predictions(keyed: Mapping[tuple[str, int, int, int], str], golds: Iterable[TrainingTuple]) -> dict[int, str]:
    """Re-key file predictions by the mids of the gold mentions."""
    out = {}
    for g in golds:
        key = (*g.span.sentence_ref, g.span.start, g.span.end)
        if key in keyed:
            out[g.span.mid] = keyed[key]
    return out
